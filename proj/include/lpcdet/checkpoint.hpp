#pragma once

// Text checkpoint format:
//
//   CKPT v1
//   META <key> <value...>          (any number, value runs to end of line)
//   TENSOR <name> <rows> <cols>
//   <rows lines of cols values, %.17g>
//   ...
//   END

#include "lpcdet/detector.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace lpcdet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, ad::Matrix> tensors;
};

inline constexpr const char* kFourierTensor = "decoder.encoder.basis";

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Every parameter plus the fixed Fourier basis.
Checkpoint make_checkpoint(const Detector& detector);
/// Only the alignment module.
Checkpoint make_aam_checkpoint(const Detector& detector);

/// Copies every tensor of `params` from the checkpoint. Missing tensors or
/// shape mismatches throw CheckpointError; unknown tensors are ignored.
void load_parameters(const nn::ParamList& params, const Checkpoint& ckpt);
/// Loads all parameters and the Fourier basis.
void load_detector(Detector& detector, const Checkpoint& ckpt);
void load_aam(Detector& detector, const Checkpoint& ckpt);

}  // namespace lpcdet
