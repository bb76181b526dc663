#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "orpo/lm.hpp"

namespace orpo {

/// Checkpoint layout (all little-endian):
///   "ORPK" | u32 version | u32 vocab_size, embed_dim, hidden_dim,
///   context_window, seed, pad_id | f64 tensors row-major in the order
///   embedding, hidden_weights, hidden_bias, output_weights, output_bias.
inline constexpr char kCheckpointMagic[4] = {'O', 'R', 'P', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const TinyLM<double>& model, std::ostream& out);
TinyLM<double> read_checkpoint(std::istream& in);

void save_checkpoint(const TinyLM<double>& model, const std::filesystem::path& path);
TinyLM<double> load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes, for bit-exact comparisons.
std::string checkpoint_bytes(const TinyLM<double>& model);

namespace io {
void put_u32(std::ostream& out, std::uint32_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
double get_f64(std::istream& in);
}  // namespace io

}  // namespace orpo
