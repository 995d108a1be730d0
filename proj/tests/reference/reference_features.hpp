#pragma once

#include <map>
#include <string>

#include "trace/corpus.hpp"

namespace trace_reference {

// Serial straight-from-the-definition re-implementation of the feature
// catalog. Deliberately naive and independent of the library's extraction
// path: its own pairing scan, its own cosine, its own medians and slopes.
// Tests compare the two implementations; the benchmark uses it as the serial
// baseline. Returns only the defined features.
std::map<std::string, double> reference_features(const trace::Conversation& conversation,
                                                 int late_k = 4, double eps = 1e-9);

}  // namespace trace_reference
