#pragma once

#include "magnet/eval.hpp"
#include "magnet/model.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace magnet {

/// Everything needed to evaluate a trained model or resume its training at
/// an index-refresh boundary.
struct Checkpoint {
  std::string objective;
  long iteration = 0;
  Mlp model;
  std::optional<Mlp> head;             // softmax classifier head
  double eval_variance = 1.0;          // running average of batch variances
  bool eval_variance_seen = false;
  std::vector<std::optional<double>> loss_cache;
  std::optional<EvalContext> context;  // absent for softmax (argmax of logits)
  std::vector<long long> class_values;  // raw label of each class index

  bool operator==(const Checkpoint& other) const;
};

/// "MGNTCKP1", objective string, i64 iteration, model block, u8 head flag
/// [+ head block], f64 eval variance, u8 seen flag, u64 cache length then
/// per entry u8 present + f64 value, u8 context flag [+ context block],
/// u64 class count then i64 raw label values.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace magnet
