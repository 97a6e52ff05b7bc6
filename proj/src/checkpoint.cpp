#include "resetopt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace resetopt {

namespace {

constexpr std::array<char, 8> kMagic{'R', 'S', 'O', 'P', 'T', 'C', 'K', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t b = 0; b < sizeof(U); ++b) bytes[b] = static_cast<char>((value >> (8 * b)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw CheckpointError("checkpoint truncated");
  }
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(bytes[b]) << (8 * b);
  return value;
}

void put_f64s(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
}

std::vector<double> get_f64s(std::istream& in, std::uint64_t n) {
  std::vector<double> xs(n);
  for (auto& x : xs) x = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return xs;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  MlpDef def{ckpt.layer_widths};
  if (param_count(def) != ckpt.params.size()) throw CheckpointError("parameters do not fit the layer widths");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.layer_widths.size()));
  for (auto w : ckpt.layer_widths) put_le<std::uint64_t>(out, w);
  put_le<std::uint64_t>(out, ckpt.params.size());
  put_f64s(out, ckpt.params.values.values());
  out.put(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& st = *ckpt.optimizer;
    if (st.m.size() != ckpt.params.size() || st.v.size() != ckpt.params.size()) {
      throw CheckpointError("optimizer moments do not match the parameter count");
    }
    put_le<std::uint64_t>(out, st.i);
    put_le<std::uint64_t>(out, st.m.size());
    put_f64s(out, st.m.values());
    put_f64s(out, st.v.values());
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw CheckpointError("not a checkpoint file");
  Checkpoint ckpt;
  const auto n_widths = get_le<std::uint32_t>(in);
  if (n_widths < 2 || n_widths > 1024) throw CheckpointError("implausible layer count in checkpoint");
  for (std::uint32_t l = 0; l < n_widths; ++l) ckpt.layer_widths.push_back(get_le<std::uint64_t>(in));
  MlpDef def{ckpt.layer_widths};
  const auto n = get_le<std::uint64_t>(in);
  if (n != param_count(def)) throw CheckpointError("parameter count does not match layer widths");
  ckpt.params = {Tensor::vector(get_f64s(in, n))};
  const int has_state = in.get();
  if (has_state == 1) {
    OptimizerState st;
    st.i = get_le<std::uint64_t>(in);
    const auto m = get_le<std::uint64_t>(in);
    if (m != n) throw CheckpointError("optimizer moment length does not match parameters");
    st.m = Tensor::vector(get_f64s(in, m));
    st.v = Tensor::vector(get_f64s(in, m));
    ckpt.optimizer = std::move(st);
  } else if (has_state != 0) {
    throw CheckpointError("corrupt optimizer-state flag");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace resetopt
