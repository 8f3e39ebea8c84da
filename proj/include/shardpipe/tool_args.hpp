#pragma once

// Per-tool argument grammar shared by the parser (to find file operands and
// dangerous options) and the classifier (to inspect flags).

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shardpipe/pipeline.hpp"

namespace shardpipe {

struct ToolOption {
  std::string name;                  // "-n", "--lines", ...
  std::optional<std::string> value;  // attached or following value
  std::size_t arg_index = 0;         // index of the (first) token in Stage::args
};

enum class OperandRole {
  Pattern,     // rg/grep pattern, sed script, awk program
  Path,        // input file
  OutputPath,  // second operand of uniq
  Data,        // tr sets, awk assignments, find expression
};

struct ScannedArgs {
  std::vector<ToolOption> options;
  struct Operand {
    std::size_t arg_index;
    OperandRole role;
  };
  std::vector<Operand> operands;

  bool has(std::string_view name) const;
  bool has_any(std::initializer_list<std::string_view> names) const;
  const ToolOption* find(std::initializer_list<std::string_view> names) const;
  std::vector<std::size_t> operands_with(OperandRole role) const;
};

/// Splits a stage's arguments into options and operands following the tool's
/// getopt conventions (bundled short flags, attached values, `--`).
ScannedArgs scan_args(const Stage& stage);

/// Names an option that executes programs or writes files, if present.
std::optional<std::string> dangerous_option(const Stage& stage, const ScannedArgs& scanned);

/// Names an option whose value is a host file path, if present.
std::optional<std::string> path_valued_option(const Stage& stage, const ScannedArgs& scanned);

}  // namespace shardpipe
