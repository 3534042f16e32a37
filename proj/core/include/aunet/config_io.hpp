#pragma once

#include <string>

#include "aunet/hierarchy.hpp"
#include "aunet/trainer.hpp"

namespace aunet {

enum class Precision { f32, f64 };  // "single" / "double" in config files

// Everything a run needs: architecture, training schedule, and the numeric
// type the model is instantiated with.
struct RunConfig {
  AUNetConfig model;
  TrainConfig train;
  Precision precision = Precision::f32;

  bool operator==(const RunConfig&) const = default;
};

// One key=value per line, dotted keys, # comments. Doubles are printed in
// their shortest round-tripping form, so parse_config(print_config(c)) == c
// down to the last bit.
std::string print_config(const RunConfig& cfg);

// Syntax check only; call validate() on the pieces for semantic checks.
// Unknown keys, duplicates, and malformed values throw std::invalid_argument
// naming the offending line.
RunConfig parse_config(const std::string& text);

}  // namespace aunet
