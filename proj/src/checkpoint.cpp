#include "chr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "chr/errors.hpp"

namespace chr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'H', 'R', 'C', 'K', 'P', 'T', '1'};

std::string shape_text(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<nn::Param*>& tensors) {
  nlohmann::ordered_json header;
  header["config"] = meta.config;
  header["config_hash"] = meta.config_hash;
  header["epoch"] = meta.epoch;
  header["step"] = meta.step;
  auto index = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto* p : tensors) {
    index.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}, {"count", p->value.size()}});
    offset += p->value.size() * sizeof(float);
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : tensors)
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    out.flush();
    if (!out) throw DataError("short write on checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw DataError("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 30)) throw DataError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.meta.config = header.at("config").get<FlatConfig>();
    ck.meta.config_hash = header.at("config_hash").get<std::string>();
    ck.meta.epoch = header.at("epoch").get<std::int64_t>();
    ck.meta.step = header.at("step").get<std::int64_t>();
    for (const auto& t : header.at("tensors")) {
      CheckpointTensor ct;
      ct.name = t.at("name").get<std::string>();
      ct.shape = t.at("shape").get<std::vector<int>>();
      ct.data.resize(t.at("count").get<std::size_t>());
      ck.tensors.push_back(std::move(ct));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  for (auto& t : ck.tensors) {
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint payload at tensor " + t.name);
  }
  return ck;
}

void restore_tensors(const Checkpoint& ckpt, const std::vector<nn::Param*>& targets) {
  for (auto* p : targets) {
    const auto* t = ckpt.find(p->name);
    if (!t) throw ConfigError("checkpoint lacks tensor " + p->name);
    if (t->shape != p->shape)
      throw ConfigError("checkpoint tensor " + p->name + " has shape " + shape_text(t->shape) + ", model expects " +
                        shape_text(p->shape));
    p->value = t->data;
  }
}

}  // namespace chr
