#include "metasemi/checkpoint.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "metasemi/config.hpp"

namespace metasemi {

namespace {

void write_values(std::ostream& out, const ParamVector& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << format_double(p[i]) << ((i + 1) % 8 == 0 || i + 1 == p.size() ? '\n' : ' ');
  }
}

std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  return tok;
}

std::size_t read_count(std::istream& in, const char* what) {
  const std::string tok = next_token(in, what);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (tok.front() == '-' || end != tok.c_str() + tok.size() || errno == ERANGE) {
    throw CheckpointError(std::string("bad ") + what + " '" + tok + "'");
  }
  return static_cast<std::size_t>(v);
}

void expect(std::istream& in, const std::string& keyword) {
  const std::string tok = next_token(in, keyword.c_str());
  if (tok != keyword) {
    throw CheckpointError("expected '" + keyword + "', found '" + tok + "'");
  }
}

ParamVector read_values(std::istream& in, std::size_t n) {
  ParamVector p;
  p.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string tok = next_token(in, "parameter values");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) {
      throw CheckpointError("bad parameter value '" + tok + "' at index " + std::to_string(i));
    }
    p.values[i] = v;
  }
  return p;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  if (ckpt.teacher && ckpt.teacher->size() != ckpt.student.size()) {
    throw CheckpointError("teacher and student parameter counts differ");
  }
  out << "metasemi-checkpoint " << kCheckpointVersion << '\n';
  out << "layers " << ckpt.layer_sizes.size();
  for (std::size_t s : ckpt.layer_sizes) out << ' ' << s;
  out << '\n';
  out << "params " << ckpt.student.size() << '\n';
  out << "teacher " << (ckpt.teacher ? 1 : 0) << '\n';
  write_values(out, ckpt.student);
  if (ckpt.teacher) write_values(out, *ckpt.teacher);
}

Checkpoint read_checkpoint(std::istream& in) {
  expect(in, "metasemi-checkpoint");
  const std::size_t version = read_count(in, "format version");
  if (version != static_cast<std::size_t>(kCheckpointVersion)) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  expect(in, "layers");
  const std::size_t n_layers = read_count(in, "layer count");
  for (std::size_t l = 0; l < n_layers; ++l) ckpt.layer_sizes.push_back(read_count(in, "layer size"));
  expect(in, "params");
  const std::size_t n_params = read_count(in, "parameter count");
  if (n_layers >= 2) {
    const MlpArch arch{ckpt.layer_sizes, Activation::relu};
    if (arch.num_params() != n_params) {
      throw CheckpointError("parameter count " + std::to_string(n_params) +
                            " does not match layers (" + std::to_string(arch.num_params()) + ")");
    }
  }
  expect(in, "teacher");
  const std::size_t has_teacher = read_count(in, "teacher flag");
  if (has_teacher > 1) throw CheckpointError("teacher flag must be 0 or 1");
  ckpt.student = read_values(in, n_params);
  if (has_teacher) ckpt.teacher = read_values(in, n_params);
  std::string extra;
  if (in >> extra) throw CheckpointError("trailing data after checkpoint: '" + extra + "'");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ckpt);
  out.flush();
  if (!out) throw std::ios_base::failure("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace metasemi
