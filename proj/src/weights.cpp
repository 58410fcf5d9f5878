#include "gfi/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "gfi/errors.hpp"

namespace gfi {

static_assert(std::endian::native == std::endian::little,
              "safetensors payloads are little-endian; big-endian hosts are unsupported");

std::int64_t ParamArray::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

WeightStore load_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open weights file " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (1ull << 30)) {
    throw FormatError("bad safetensors header length in " + path.string());
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated safetensors header in " + path.string());

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed safetensors header in " + path.string() + ": " + e.what());
  }

  const std::streamoff data_start = static_cast<std::streamoff>(8 + header_len);
  WeightStore store;
  for (const auto& [name, entry] : meta.items()) {
    if (name == "__metadata__") continue;
    ParamArray arr;
    arr.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto dtype = entry.at("dtype").get<std::string>();
    const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[1] < offsets[0]) {
      throw FormatError("bad data_offsets for " + name);
    }
    const std::uint64_t nbytes = offsets[1] - offsets[0];
    const auto n = static_cast<std::uint64_t>(arr.numel());
    std::size_t width = 0;
    if (dtype == "F32") {
      width = 4;
    } else if (dtype == "F64") {
      width = 8;
    } else {
      throw FormatError("unsupported dtype " + dtype + " for " + name);
    }
    if (nbytes != n * width) throw FormatError("byte count mismatch for " + name);

    std::vector<char> raw(nbytes);
    in.seekg(data_start + static_cast<std::streamoff>(offsets[0]));
    in.read(raw.data(), static_cast<std::streamsize>(nbytes));
    if (!in) throw FormatError("truncated payload for " + name + " in " + path.string());

    arr.values.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (width == 4) {
        float f;
        std::memcpy(&f, raw.data() + i * 4, 4);
        arr.values[i] = f;
      } else {
        std::memcpy(&arr.values[i], raw.data() + i * 8, 8);
      }
    }
    store.emplace(name, std::move(arr));
  }
  return store;
}

void save_safetensors(const std::filesystem::path& path, const WeightStore& store) {
  nlohmann::json meta = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, arr] : store) {
    const std::uint64_t nbytes = arr.values.size() * 8;
    meta[name] = {{"dtype", "F64"}, {"shape", arr.shape}, {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
  }
  std::string header = meta.dump();
  // Header is padded with spaces to keep the payload 8-byte aligned.
  while (header.size() % 8 != 0) header.push_back(' ');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write weights file " + path.string());
  const std::uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, arr] : store) {
    out.write(reinterpret_cast<const char*>(arr.values.data()),
              static_cast<std::streamsize>(arr.values.size() * 8));
  }
  if (!out) throw IngestionError("failed writing " + path.string());
}

}  // namespace gfi
