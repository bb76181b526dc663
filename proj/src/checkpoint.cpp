#include "orpo/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace orpo {
namespace io {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace io

namespace {

template <typename M>
void write_row_major(std::ostream& out, const M& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) io::put_f64(out, m(i, j));
}

template <typename M>
void read_row_major(std::istream& in, M& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = io::get_f64(in);
}

}  // namespace

void write_checkpoint(const TinyLM<double>& model, std::ostream& out) {
  const auto& c = model.config();
  out.write(kCheckpointMagic, 4);
  io::put_u32(out, kCheckpointVersion);
  for (std::uint32_t v : {c.vocab_size, c.embed_dim, c.hidden_dim, c.context_window, c.seed,
                          static_cast<std::uint32_t>(c.pad_id)}) {
    io::put_u32(out, v);
  }
  const auto& p = model.params();
  write_row_major(out, p.embedding);
  write_row_major(out, p.hidden_weights);
  write_row_major(out, p.hidden_bias);
  write_row_major(out, p.output_weights);
  write_row_major(out, p.output_bias);
}

TinyLM<double> read_checkpoint(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw std::runtime_error("not an ORPK checkpoint");
  }
  const std::uint32_t version = io::get_u32(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  LMConfig c;
  c.vocab_size = io::get_u32(in);
  c.embed_dim = io::get_u32(in);
  c.hidden_dim = io::get_u32(in);
  c.context_window = io::get_u32(in);
  c.seed = io::get_u32(in);
  c.pad_id = static_cast<TokenId>(io::get_u32(in));
  c.validate();
  auto p = Params<double>::zeros(c);
  read_row_major(in, p.embedding);
  read_row_major(in, p.hidden_weights);
  read_row_major(in, p.hidden_bias);
  read_row_major(in, p.output_weights);
  read_row_major(in, p.output_bias);
  return TinyLM<double>(c, std::move(p));
}

void save_checkpoint(const TinyLM<double>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(model, out);
}

TinyLM<double> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_checkpoint(in);
}

std::string checkpoint_bytes(const TinyLM<double>& model) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(model, out);
  return out.str();
}

}  // namespace orpo
