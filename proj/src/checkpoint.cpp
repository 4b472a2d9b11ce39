#include "sil/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "sil/error.hpp"

namespace sil::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'I', 'L', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save(const std::filesystem::path& path, const nn::MlpParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  const auto& shape = params.shape();
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, shape.input_dim);
  put<std::uint64_t>(out, shape.action_count);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.activation));
  put<std::uint64_t>(out, shape.hidden.size());
  for (auto w : shape.hidden) put<std::uint64_t>(out, w);
  put<std::uint64_t>(out, params.size());
  const auto values = params.values();
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

nn::MlpParams load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw ConfigError(path.string() + " is not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());

  nn::MlpShape shape;
  shape.input_dim = get<std::uint64_t>(in, path);
  shape.action_count = get<std::uint64_t>(in, path);
  const auto activation = get<std::uint32_t>(in, path);
  if (activation > static_cast<std::uint32_t>(nn::Activation::identity))
    throw ConfigError("unknown activation in checkpoint " + path.string());
  shape.activation = static_cast<nn::Activation>(activation);
  const auto n_hidden = get<std::uint64_t>(in, path);
  if (n_hidden > 1024) throw ConfigError("implausible layer count in checkpoint " + path.string());
  shape.hidden.resize(n_hidden);
  for (auto& w : shape.hidden) w = get<std::uint64_t>(in, path);

  nn::MlpParams params(shape);
  const auto count = get<std::uint64_t>(in, path);
  if (count != params.size())
    throw ConfigError("checkpoint " + path.string() + " holds " + std::to_string(count) + " values, shape needs " +
                      std::to_string(params.size()));
  auto values = params.values();
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
    throw ConfigError("truncated checkpoint " + path.string());
  if (in.peek() != std::ifstream::traits_type::eof()) throw ConfigError("trailing bytes in checkpoint " + path.string());
  return params;
}

}  // namespace sil::checkpoint
