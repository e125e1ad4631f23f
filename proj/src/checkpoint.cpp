#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rdi {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& section,
                       const std::string& msg) {
  throw std::runtime_error("checkpoint " + path.string() + " [" + section + "]: " + msg);
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const CheckpointData& data) {
  nlohmann::json j;
  j["format"] = "RDICKPT1";
  j["version"] = kCheckpointVersion;
  j["model_config"] = nlohmann::json::parse(data.model_config_json);
  if (!data.train_config_json.empty())
    j["train_config"] = nlohmann::json::parse(data.train_config_json);
  j["iteration"] = data.iteration;
  j["rng_state"] = data.rng_state;
  j["cursor_positions"] = data.cursor_positions;
  j["power_disc_image"] = data.power_disc_image;
  j["power_disc_depth"] = data.power_disc_depth;

  int64_t offset = 0;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : data.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                       {"count", t.numel()}});
    offset += t.numel();
  }
  j["tensors"] = tensors;
  j["opt"] = {{"generator", {{"offset", offset}, {"count", data.opt_generator.size()}}}};
  offset += static_cast<int64_t>(data.opt_generator.size());
  j["opt"]["disc_image"] = {{"offset", offset}, {"count", data.opt_disc_image.size()}};
  offset += static_cast<int64_t>(data.opt_disc_image.size());
  j["opt"]["disc_depth"] = {{"offset", offset}, {"count", data.opt_disc_depth.size()}};
  offset += static_cast<int64_t>(data.opt_disc_depth.size());
  j["payload_count"] = offset;

  const std::string header = j.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(path, "open", "cannot open for writing");
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint32_t version = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : data.tensors) {
    auto d = t.data();
    f.write(reinterpret_cast<const char*>(d.data()),
            static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  write_doubles(f, data.opt_generator);
  write_doubles(f, data.opt_disc_image);
  write_doubles(f, data.opt_disc_depth);
  if (!f) fail(path, "payload", "write failure");
}

CheckpointData checkpoint_resume(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "open", "cannot open for reading");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    fail(path, "magic", "not a checkpoint archive (expected format tag RDICKPT1)");
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!f || version != kCheckpointVersion)
    fail(path, "version", "format version " + std::to_string(version) +
                              " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen == 0 || hlen > (1ull << 30)) fail(path, "header", "bad header length");
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) fail(path, "header", "truncated header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    fail(path, "header", std::string("JSON parse error: ") + e.what());
  }

  CheckpointData data;
  try {
    data.model_config_json = j.at("model_config").dump();
    if (j.contains("train_config")) data.train_config_json = j.at("train_config").dump();
    data.iteration = j.at("iteration").get<int64_t>();
    data.rng_state = j.at("rng_state").get<std::string>();
    data.cursor_positions = j.value("cursor_positions", std::vector<int>{});
    data.power_disc_image =
        j.value("power_disc_image", std::vector<std::vector<double>>{});
    data.power_disc_depth =
        j.value("power_disc_depth", std::vector<std::vector<double>>{});
  } catch (const std::exception& e) {
    fail(path, "header-fields", e.what());
  }

  const int64_t payload_count = j.at("payload_count").get<int64_t>();
  std::vector<double> payload(static_cast<size_t>(payload_count));
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f) fail(path, "payload", "truncated tensor payload");

  try {
    for (const auto& te : j.at("tensors")) {
      const std::string name = te.at("name").get<std::string>();
      const Shape shape = te.at("shape").get<Shape>();
      const int64_t offset = te.at("offset").get<int64_t>();
      const int64_t count = te.at("count").get<int64_t>();
      if (offset < 0 || offset + count > payload_count)
        fail(path, "tensors", "tensor " + name + " outside payload bounds");
      std::vector<double> vals(payload.begin() + offset, payload.begin() + offset + count);
      data.tensors.emplace_back(name, from_vec(shape, std::move(vals)));
    }
    auto read_opt = [&](const char* key) {
      const auto& o = j.at("opt").at(key);
      const int64_t offset = o.at("offset").get<int64_t>();
      const int64_t count = o.at("count").get<int64_t>();
      if (offset < 0 || offset + count > payload_count)
        fail(path, "opt", std::string(key) + " outside payload bounds");
      return std::vector<double>(payload.begin() + offset, payload.begin() + offset + count);
    };
    data.opt_generator = read_opt("generator");
    data.opt_disc_image = read_opt("disc_image");
    data.opt_disc_depth = read_opt("disc_depth");
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    fail(path, "tensors", e.what());
  }
  return data;
}

}  // namespace rdi
