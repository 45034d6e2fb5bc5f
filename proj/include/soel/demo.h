#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "soel/dynamics.h"
#include "soel/plasticity.h"
#include "soel/quantization.h"

namespace soel {

// One plastic neuron driven by independent Poisson inputs, learning to fire
// `soel.target_spikes` per window.
struct DemoConfig {
  int inputs = 100;
  double input_rate = 0.2;       // spike probability per input and step
  double initial_weight = 0.0;
  NeuronConfig neuron;
  SoelConfig soel;
  bool quantized = true;
  int max_windows = 200;
  int stable_windows = 5;        // consecutive windows with |e| < theta to stop
  std::uint64_t seed = 0;

  DemoConfig();
  void Validate() const;
};

struct DemoStep {
  int step = 0;
  int input_spikes = 0;
  int output_spike = 0;
  double weight = 0.0;           // mean shadow weight
  double quantized_weight = 0.0; // mean integer weight
  int encoded_error = 0;         // post-trace written at the last epoch, 0 = none
};

struct DemoWindow {
  int window = 0;
  int count = 0;
  double error = 0.0;            // gated error
  int writes = 0;                // rows updated at this epoch
};

struct DemoResult {
  std::vector<DemoStep> steps;
  std::vector<DemoWindow> windows;
  bool converged = false;
  int windows_to_converge = -1;  // windows run when the stable streak completed
  long long row_writes = 0;
};

DemoResult RunSingleNeuronDemo(const DemoConfig& cfg);

// step,input_spikes,output_spike,weight,quantized_weight,encoded_error
void WriteDemoCsv(std::ostream& out, const DemoResult& r);
// window,count,error,writes
void WriteDemoWindowsCsv(std::ostream& out, const DemoResult& r);

}  // namespace soel
