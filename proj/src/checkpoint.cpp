#include "defsurf/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace defsurf {

namespace {

using nlohmann::json;

void write_tensors(std::ofstream& out, const std::vector<nn::Matrix<float>>& ts) {
  for (const auto& t : ts)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
}

void read_tensors(std::ifstream& in, std::vector<nn::Matrix<float>>& ts) {
  for (auto& t : ts)
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SurfaceNetF& net,
                     int epoch, double train_mean_depth,
                     nn::Adam<float>* optimizer) {
  const auto& store = net.params();

  json header;
  header["format"] = kCheckpointMagic;
  json model;
  for (const auto& [key, value] : net.config().to_keyvalue().items())
    model[key] = value;
  header["model"] = model;
  header["epoch"] = epoch;
  header["train_mean_depth"] = train_mean_depth;
  json tensors = json::array();
  for (Index i = 0; i < store.count(); ++i)
    tensors.push_back({{"name", store.name(i)},
                       {"rows", store.value(i).rows()},
                       {"cols", store.value(i).cols()}});
  header["params"] = tensors;
  header["optimizer"] = {{"present", optimizer != nullptr},
                         {"step", optimizer ? optimizer->step_count() : 0}};

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 6);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensors(out, store.snapshot());
  if (optimizer) {
    write_tensors(out, optimizer->first_moment());
    write_tensors(out, optimizer->second_moment());
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw std::runtime_error("not a TLSFS1 checkpoint: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(text);

  Checkpoint ckpt;
  KeyValue model_kv;
  for (const auto& [key, value] : header.at("model").items())
    model_kv.set(key, value.get<std::string>());
  ckpt.config = ModelConfig::from_keyvalue(model_kv);
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.train_mean_depth = header.at("train_mean_depth").get<double>();

  for (const auto& t : header.at("params"))
    ckpt.weights.push_back(nn::Matrix<float>::Zero(t.at("rows").get<Index>(),
                                                   t.at("cols").get<Index>()));
  read_tensors(in, ckpt.weights);

  const auto& opt = header.at("optimizer");
  ckpt.has_optimizer = opt.at("present").get<bool>();
  if (ckpt.has_optimizer) {
    ckpt.adam_step = opt.at("step").get<long>();
    for (const auto& w : ckpt.weights) {
      ckpt.adam_m.push_back(nn::Matrix<float>::Zero(w.rows(), w.cols()));
      ckpt.adam_v.push_back(nn::Matrix<float>::Zero(w.rows(), w.cols()));
    }
    read_tensors(in, ckpt.adam_m);
    read_tensors(in, ckpt.adam_v);
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
  return ckpt;
}

std::unique_ptr<SurfaceNetF> Checkpoint::make_net() const {
  auto net = std::make_unique<SurfaceNetF>(config, /*seed=*/0);
  net->params().restore(weights);
  return net;
}

}  // namespace defsurf
