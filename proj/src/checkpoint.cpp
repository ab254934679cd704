#include "chunkgrpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "chunkgrpo/error.hpp"

namespace chunkgrpo {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw InputError("checkpoint: truncated file");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string encode_checkpoint(const ParamVector& params) {
  const std::string arch = params.arch().describe();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arch.size()));
  out += arch;
  put_le<std::uint64_t>(out, params.size());
  for (double v : params.values()) {
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamVector decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw InputError("checkpoint: bad magic");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto arch_len = get_le<std::uint32_t>(bytes, pos);
  if (pos + arch_len > bytes.size()) {
    throw InputError("checkpoint: truncated architecture header");
  }
  const Architecture arch = Architecture::parse(std::string_view(bytes).substr(pos, arch_len));
  pos += arch_len;
  const auto count = get_le<std::uint64_t>(bytes, pos);
  if (count != arch.param_count()) {
    throw InputError("checkpoint: parameter count does not match architecture");
  }
  Vec values(count);
  for (auto& v : values) {
    v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  }
  if (pos != bytes.size()) {
    throw InputError("checkpoint: trailing bytes");
  }
  return ParamVector(arch, std::move(values));
}

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("checkpoint: cannot write " + path.string());
  }
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("checkpoint: cannot read " + path.string());
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace chunkgrpo
