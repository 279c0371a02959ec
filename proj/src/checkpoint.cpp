#include "magnet/checkpoint.hpp"

#include "magnet/binary_io.hpp"

#include <fstream>

namespace magnet {

namespace {
constexpr char kCheckpointMagic[9] = "MGNTCKP1";

bool same_context(const std::optional<EvalContext>& a, const std::optional<EvalContext>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->points.rows() == b->points.rows() && a->points.cols() == b->points.cols() && a->points == b->points &&
         a->classes == b->classes && a->class_count == b->class_count && a->variance == b->variance &&
         a->neighbours == b->neighbours;
}
}  // namespace

bool Checkpoint::operator==(const Checkpoint& other) const {
  return objective == other.objective && iteration == other.iteration && model == other.model &&
         head == other.head && eval_variance == other.eval_variance &&
         eval_variance_seen == other.eval_variance_seen && loss_cache == other.loss_cache &&
         same_context(context, other.context) && class_values == other.class_values;
}

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, 8);
  io::write_string(out, ckpt.objective);
  io::write_pod<std::int64_t>(out, ckpt.iteration);
  save_model(out, ckpt.model);
  io::write_pod<std::uint8_t>(out, ckpt.head ? 1 : 0);
  if (ckpt.head) save_model(out, *ckpt.head);
  io::write_pod(out, ckpt.eval_variance);
  io::write_pod<std::uint8_t>(out, ckpt.eval_variance_seen ? 1 : 0);
  io::write_pod<std::uint64_t>(out, ckpt.loss_cache.size());
  for (const auto& v : ckpt.loss_cache) {
    io::write_pod<std::uint8_t>(out, v ? 1 : 0);
    io::write_pod<double>(out, v.value_or(0.0));
  }
  io::write_pod<std::uint8_t>(out, ckpt.context ? 1 : 0);
  if (ckpt.context) {
    const auto& ctx = *ckpt.context;
    io::write_sized_matrix(out, ctx.points);
    for (int c : ctx.classes) io::write_pod<std::int32_t>(out, c);
    io::write_pod<std::int32_t>(out, ctx.class_count);
    io::write_pod(out, ctx.variance);
    io::write_pod<std::int32_t>(out, ctx.neighbours);
  }
  io::write_pod<std::uint64_t>(out, ckpt.class_values.size());
  for (long long v : ckpt.class_values) io::write_pod<std::int64_t>(out, v);
}

Checkpoint load_checkpoint(std::istream& in) {
  io::expect_magic(in, kCheckpointMagic);
  Checkpoint ckpt;
  ckpt.objective = io::read_string(in);
  ckpt.iteration = static_cast<long>(io::read_pod<std::int64_t>(in));
  ckpt.model = load_model(in);
  if (io::read_pod<std::uint8_t>(in)) ckpt.head = load_model(in);
  ckpt.eval_variance = io::read_pod<double>(in);
  ckpt.eval_variance_seen = io::read_pod<std::uint8_t>(in) != 0;
  const auto cache = io::read_pod<std::uint64_t>(in);
  if (cache > (1u << 28)) throw ParseError("implausible loss cache length");
  ckpt.loss_cache.resize(cache);
  for (auto& v : ckpt.loss_cache) {
    const bool present = io::read_pod<std::uint8_t>(in) != 0;
    const double value = io::read_pod<double>(in);
    if (present) v = value;
  }
  if (io::read_pod<std::uint8_t>(in)) {
    EvalContext ctx;
    ctx.points = io::read_sized_matrix(in);
    ctx.classes.resize(static_cast<std::size_t>(ctx.points.cols()));
    for (auto& c : ctx.classes) c = io::read_pod<std::int32_t>(in);
    ctx.class_count = io::read_pod<std::int32_t>(in);
    ctx.variance = io::read_pod<double>(in);
    ctx.neighbours = io::read_pod<std::int32_t>(in);
    ctx.validate();
    ckpt.context = std::move(ctx);
  }
  const auto classes = io::read_pod<std::uint64_t>(in);
  if (classes > (1u << 24)) throw ParseError("implausible class count");
  for (std::uint64_t c = 0; c < classes; ++c) ckpt.class_values.push_back(io::read_pod<std::int64_t>(in));
  return ckpt;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace magnet
