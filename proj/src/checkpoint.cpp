#include "lpcdet/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lpcdet {

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << "CKPT v1\n";
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("checkpoint meta key/value contains whitespace: " + k);
    }
    out << "META " << k << ' ' << v << '\n';
  }
  char buf[32];
  for (const auto& [name, m] : ckpt.tensors) {
    out << "TENSOR " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
  out << "END\n";
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "CKPT v1") {
    throw CheckpointError(path.string() + ": not a CKPT v1 file");
  }
  Checkpoint ckpt;
  std::size_t lineno = 1;
  bool ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "META") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (tag == "TENSOR") {
      std::string name;
      long rows = -1, cols = -1;
      if (!(ls >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw CheckpointError(path.string() + ":" + std::to_string(lineno) + ": bad TENSOR header");
      }
      ad::Matrix m(rows, cols);
      for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
          if (!(in >> m(r, c))) {
            throw CheckpointError(path.string() + ": truncated tensor " + name);
          }
        }
      }
      std::getline(in, line);
      lineno += static_cast<std::size_t>(rows);
      ckpt.tensors[name] = std::move(m);
    } else if (tag == "END") {
      ended = true;
      break;
    } else {
      throw CheckpointError(path.string() + ":" + std::to_string(lineno) + ": unknown record '" +
                            tag + "'");
    }
  }
  if (!ended) throw CheckpointError(path.string() + ": missing END");
  return ckpt;
}

namespace {

void put(Checkpoint& ckpt, const nn::ParamList& params) {
  for (const auto& [name, v] : params) ckpt.tensors[name] = v.value();
}

std::string shape(const ad::Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Checkpoint make_checkpoint(const Detector& detector) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "detector";
  put(ckpt, detector.parameters());
  ckpt.tensors[kFourierTensor] = detector.decoder.encoder.basis.matrix;
  return ckpt;
}

Checkpoint make_aam_checkpoint(const Detector& detector) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "aam";
  put(ckpt, detector.aam_parameters());
  return ckpt;
}

void load_parameters(const nn::ParamList& params, const Checkpoint& ckpt) {
  for (const auto& [name, v] : params) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks tensor " + name);
    if (it->second.rows() != v.rows() || it->second.cols() != v.cols()) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " + shape(it->second) +
                            ", model " + shape(v.value()));
    }
  }
  for (const auto& [name, v] : params) {
    ad::Var target = v;
    target.mutable_value() = ckpt.tensors.at(name);
  }
}

void load_detector(Detector& detector, const Checkpoint& ckpt) {
  auto& basis = detector.decoder.encoder.basis.matrix;
  const auto it = ckpt.tensors.find(kFourierTensor);
  if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint lacks the Fourier basis");
  if (it->second.rows() != basis.rows() || it->second.cols() != basis.cols()) {
    throw CheckpointError("shape mismatch for Fourier basis: checkpoint " + shape(it->second) +
                          ", model " + shape(basis));
  }
  load_parameters(detector.parameters(), ckpt);
  basis = it->second;
}

void load_aam(Detector& detector, const Checkpoint& ckpt) {
  load_parameters(detector.aam_parameters(), ckpt);
}

}  // namespace lpcdet
