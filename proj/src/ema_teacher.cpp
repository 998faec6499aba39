#include "metasemi/ema_teacher.hpp"

namespace metasemi {

void ema_update_inplace(TeacherState& teacher, const ParamVector& student) {
  if (teacher.params.size() != student.size()) {
    throw ShapeError("ema_update: teacher has " + std::to_string(teacher.params.size()) +
                     " parameters, student has " + std::to_string(student.size()));
  }
  const double d = teacher.decay;
  const double s = 1.0 - d;
  for (std::size_t i = 0; i < student.size(); ++i) {
    teacher.params[i] = d * teacher.params[i] + s * student[i];
  }
}

TeacherState ema_update(const TeacherState& teacher, const ParamVector& student) {
  TeacherState next = teacher;
  ema_update_inplace(next, student);
  return next;
}

namespace {

Vec64 label_from_probs(std::span<const double> probs, bool one_hot_labels) {
  if (!one_hot_labels) return {probs.begin(), probs.end()};
  return one_hot(argmax(probs), probs.size());
}

}  // namespace

Vec64 pseudo_label(const ParamVector& params, const MlpArch& arch, std::span<const double> u,
                   bool one_hot_labels) {
  Mat64 in(1, u.size());
  std::copy(u.begin(), u.end(), in.row(0).begin());
  const Mat64 probs = forward(params, arch, in);
  return label_from_probs(probs.row(0), one_hot_labels);
}

std::vector<PseudoLabeledExample> pseudo_label_batch(const ParamVector& params,
                                                     const MlpArch& arch,
                                                     std::span<const Vec64> features,
                                                     bool one_hot_labels) {
  std::vector<PseudoLabeledExample> out;
  if (features.empty()) return out;
  const Mat64 probs =
      forward(params, arch, Mat64::from_rows({features.begin(), features.end()}));
  out.reserve(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    out.push_back({features[j], label_from_probs(probs.row(j), one_hot_labels)});
  }
  return out;
}

}  // namespace metasemi
