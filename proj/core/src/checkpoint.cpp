#include "idbr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace idbr {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'I', 'D', 'B', 'R', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return value;
}

json meta_to_json(const Model& model, const Tokenizer& tokenizer,
                  const CheckpointMeta& meta) {
  const ModelConfig& c = model.config();
  json j;
  j["format_version"] = 1;
  j["method"] = meta.method;
  j["seed"] = meta.seed;
  j["completed_tasks"] = meta.completed_tasks;
  j["order_id"] = meta.order_id;
  j["model"] = {
      {"vocab_size", c.vocab_size},
      {"embed_dim", c.embed_dim},
      {"hidden_dim", c.hidden_dim},
      {"encoder_dim", c.encoder_dim},
      {"feature_dim", c.feature_dim},
      {"num_tasks", c.num_tasks},
      {"num_classes", c.num_classes},
      {"max_positions", c.max_positions},
      {"position_modulation", c.position_modulation},
      {"init_seed", c.init_seed},
  };
  json tasks = json::array();
  for (const CheckpointTaskInfo& t : meta.tasks) {
    tasks.push_back({{"name", t.name},
                     {"num_classes", t.num_classes},
                     {"label_offset", t.label_offset}});
  }
  j["tasks"] = tasks;
  j["vocab_hash"] = tokenizer.vocab_hash();
  j["vocab"] = tokenizer.vocab();
  j["tokenizer"] = {{"max_vocab", tokenizer.config().max_vocab},
                    {"max_length", tokenizer.config().max_length}};
  return j;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Tokenizer& tokenizer, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  }
  out.write(kMagic, sizeof kMagic);

  const std::string header = meta_to_json(model, tokenizer, meta).dump();
  write_pod<uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const auto views = model.params().views();
  write_pod<uint32_t>(out, static_cast<uint32_t>(views.size()));
  for (const auto& v : views) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(v.name.size()));
    out.write(v.name.data(), static_cast<std::streamsize>(v.name.size()));
    write_pod<uint64_t>(out, static_cast<uint64_t>(v.size));
    out.write(reinterpret_cast<const char*>(v.data),
              static_cast<std::streamsize>(v.size * sizeof(double)));
  }
  if (!out) {
    throw std::runtime_error("checkpoint: write failed for " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }

  const auto header_size = read_pod<uint64_t>(in);
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw std::runtime_error("checkpoint: truncated header");

  json j = json::parse(header);
  const json& m = j.at("model");
  ModelConfig config;
  config.vocab_size = m.at("vocab_size").get<int>();
  config.embed_dim = m.at("embed_dim").get<int>();
  config.hidden_dim = m.at("hidden_dim").get<int>();
  config.encoder_dim = m.at("encoder_dim").get<int>();
  config.feature_dim = m.at("feature_dim").get<int>();
  config.num_tasks = m.at("num_tasks").get<int>();
  config.num_classes = m.at("num_classes").get<int>();
  config.max_positions = m.at("max_positions").get<int>();
  config.position_modulation = m.at("position_modulation").get<bool>();
  config.init_seed = m.at("init_seed").get<uint64_t>();

  TokenizerConfig tok_cfg;
  tok_cfg.max_vocab = j.at("tokenizer").at("max_vocab").get<size_t>();
  tok_cfg.max_length = j.at("tokenizer").at("max_length").get<size_t>();
  Tokenizer tokenizer = Tokenizer::from_vocab(
      j.at("vocab").get<std::vector<std::string>>(), tok_cfg);
  if (tokenizer.vocab_hash() != j.at("vocab_hash").get<uint64_t>()) {
    throw std::runtime_error("checkpoint: vocabulary hash mismatch in " +
                             path.string());
  }

  CheckpointMeta meta;
  meta.method = j.at("method").get<std::string>();
  meta.seed = j.at("seed").get<uint64_t>();
  meta.completed_tasks = j.at("completed_tasks").get<int>();
  meta.order_id = j.at("order_id").get<std::string>();
  meta.vocab_hash = j.at("vocab_hash").get<uint64_t>();
  for (const json& t : j.at("tasks")) {
    meta.tasks.push_back(CheckpointTaskInfo{
        t.at("name").get<std::string>(), t.at("num_classes").get<int>(),
        t.at("label_offset").get<int>()});
  }

  Model model(config);
  auto views = model.params().views();
  const auto tensor_count = read_pod<uint32_t>(in);
  if (tensor_count != views.size()) {
    throw std::runtime_error("checkpoint: tensor count mismatch");
  }
  for (auto& v : views) {
    const auto name_size = read_pod<uint32_t>(in);
    std::string name(name_size, '\0');
    in.read(name.data(), name_size);
    const auto size = read_pod<uint64_t>(in);
    if (!in || name != v.name || size != static_cast<uint64_t>(v.size)) {
      throw std::runtime_error("checkpoint: tensor layout mismatch at `" +
                               name + "`");
    }
    in.read(reinterpret_cast<char*>(v.data),
            static_cast<std::streamsize>(v.size * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
  }

  return Checkpoint{std::move(model), std::move(tokenizer), std::move(meta)};
}

}  // namespace idbr
