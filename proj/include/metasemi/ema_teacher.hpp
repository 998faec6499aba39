#pragma once

#include <span>
#include <vector>

#include "metasemi/data.hpp"
#include "metasemi/mlp.hpp"

namespace metasemi {

/// Exponential moving average of the student parameters. Only ema_update
/// changes it; gradients never touch the teacher.
struct TeacherState {
  ParamVector params;
  double decay = 0.999;
};

/// teacher <- decay * teacher + (1 - decay) * student
TeacherState ema_update(const TeacherState& teacher, const ParamVector& student);
void ema_update_inplace(TeacherState& teacher, const ParamVector& student);

/// Softmax prediction of `params`, or its argmax one-hot (lowest index on ties).
Vec64 pseudo_label(const ParamVector& params, const MlpArch& arch, std::span<const double> u,
                   bool one_hot_labels = false);

/// Batched form of pseudo_label.
std::vector<PseudoLabeledExample> pseudo_label_batch(const ParamVector& params,
                                                     const MlpArch& arch,
                                                     std::span<const Vec64> features,
                                                     bool one_hot_labels = false);

}  // namespace metasemi
