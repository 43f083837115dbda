#pragma once

#include <vector>

namespace fedtsd {

// One communication round worth of observable state. wall_ms is measured and
// kept in memory for runtime checks but stays out of serialized logs so the
// same seed always produces the same bytes on disk.
struct MetricsRecord {
  int round = 0;
  double hopkins = 0.0;
  bool gate_fired = false;
  int cluster_count = 1;
  std::vector<double> shared_counts;     // by ascending cluster id
  std::vector<double> client_accuracy;   // by client id
  double weighted_accuracy = 0.0;
  double wall_ms = 0.0;
};

}  // namespace fedtsd
