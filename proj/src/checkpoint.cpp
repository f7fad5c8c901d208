#include "synseg/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "synseg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace synseg {

namespace {
constexpr char kMagic[8] = {'S', 'Y', 'N', 'S', 'E', 'G', '\0', '\x01'};
constexpr int kFormatVersion = 1;
}  // namespace

const DenseArray* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::string& path, nlohmann::ordered_json manifest_fields,
                      const std::vector<std::pair<std::string, DenseArray>>& tensors) {
  for (size_t i = 0; i < tensors.size(); ++i)
    for (size_t j = i + 1; j < tensors.size(); ++j)
      if (tensors[i].first == tensors[j].first)
        throw std::invalid_argument("checkpoint: duplicate tensor name '" + tensors[i].first + "'");

  nlohmann::ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  manifest["tensors"] = std::move(index);
  for (auto& [key, val] : manifest_fields.items()) manifest[key] = val;

  const std::string json = manifest.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("checkpoint: cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t len = json.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    for (const auto& [name, t] : tensors)
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    out.flush();
    if (!out) throw InputError("checkpoint: failed writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw InputError("checkpoint: cannot rename " + tmp + " to " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw InputError("checkpoint: " + path + " has no valid container magic");

  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != sizeof(len) || len == 0 || len > (1ULL << 31))
    throw InputError("checkpoint: " + path + " has a corrupt manifest length");

  std::string json(len, '\0');
  in.read(json.data(), static_cast<std::streamsize>(len));
  if (in.gcount() != static_cast<std::streamsize>(len))
    throw InputError("checkpoint: " + path + " is truncated inside the manifest");

  CheckpointData ck;
  try {
    ck.manifest = nlohmann::ordered_json::parse(json);
  } catch (const std::exception& e) {
    throw InputError("checkpoint: " + path + " manifest is not valid JSON: " + e.what());
  }
  if (!ck.manifest.contains("format_version") || !ck.manifest["format_version"].is_number_integer())
    throw InputError("checkpoint: " + path + " manifest lacks format_version");
  const int version = ck.manifest["format_version"].get<int>();
  if (version != kFormatVersion)
    throw InputError("checkpoint: " + path + " has unsupported format_version " +
                     std::to_string(version));
  if (!ck.manifest.contains("tensors") || !ck.manifest["tensors"].is_array())
    throw InputError("checkpoint: " + path + " manifest lacks a tensor index");

  const std::streampos blob_base = in.tellg();
  for (const auto& entry : ck.manifest["tensors"]) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
    const int64_t numel = shape_numel(shape);
    if (nbytes != static_cast<uint64_t>(numel) * sizeof(float))
      throw InputError("checkpoint: tensor '" + name + "' in " + path +
                       " has inconsistent shape and byte count");
    in.seekg(blob_base + static_cast<std::streamoff>(offset));
    std::vector<float> data(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(nbytes));
    if (in.gcount() != static_cast<std::streamsize>(nbytes))
      throw InputError("checkpoint: " + path + " is truncated inside tensor '" + name + "'");
    ck.tensors.emplace_back(name, DenseArray(shape, std::move(data)));
  }
  return ck;
}

}  // namespace synseg
