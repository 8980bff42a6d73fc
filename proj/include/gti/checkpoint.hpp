#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gti/errors.hpp"
#include "gti/model.hpp"
#include "gti/rng.hpp"
#include "gti/train.hpp"

namespace gti {

// On-disk model format: 4-byte magic, little-endian u64 manifest
// length, UTF-8 JSON manifest, then a float32 payload holding every
// parameter in manifest order followed by the optimizer's first and
// second moments for the trainable ones.

inline constexpr char kCheckpointMagic[4] = {'G', 'T', 'I', '1'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json task_to_json(const TaskConfig& t) {
  return {{"name", t.name}, {"is_span", t.is_span}, {"tags", t.tags}};
}

inline TaskConfig task_from_json(const nlohmann::json& j) {
  TaskConfig t;
  t.name = j.at("name").get<std::string>();
  t.is_span = j.at("is_span").get<bool>();
  t.tags = j.at("tags").get<std::vector<std::string>>();
  return t;
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json aux = nlohmann::json::array();
  for (const TaskConfig& t : s.aux) aux.push_back(task_to_json(t));
  return {{"d_word", s.d_word},
          {"d_char", s.d_char},
          {"n_char_filters", s.n_char_filters},
          {"char_filter_width", s.char_filter_width},
          {"d_h", s.d_h},
          {"d_label", s.d_label},
          {"dropout", s.dropout},
          {"use_iobes_mask", s.use_iobes_mask},
          {"normalize_digits", s.normalize_digits},
          {"variant", variant_name(s.variant)},
          {"seed", s.seed},
          {"word_vocab", s.word_vocab},
          {"char_vocab", s.char_vocab},
          {"aux", aux},
          {"main", task_to_json(s.main)}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.d_word = j.at("d_word").get<std::size_t>();
  s.d_char = j.at("d_char").get<std::size_t>();
  s.n_char_filters = j.at("n_char_filters").get<std::size_t>();
  s.char_filter_width = j.at("char_filter_width").get<std::size_t>();
  s.d_h = j.at("d_h").get<std::size_t>();
  s.d_label = j.at("d_label").get<std::size_t>();
  s.dropout = j.at("dropout").get<double>();
  s.use_iobes_mask = j.at("use_iobes_mask").get<bool>();
  s.normalize_digits = j.at("normalize_digits").get<bool>();
  s.variant = variant_from_name(j.at("variant").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.word_vocab = j.at("word_vocab").get<std::vector<std::string>>();
  s.char_vocab = j.at("char_vocab").get<std::vector<std::string>>();
  for (const nlohmann::json& t : j.at("aux")) s.aux.push_back(task_from_json(t));
  s.main = task_from_json(j.at("main"));
  return s;
}

inline nlohmann::json train_to_json(const TrainConfig& c) {
  return {{"alpha0", c.alpha0},
          {"total_epochs", c.total_epochs},
          {"num_cycles", c.num_cycles},
          {"epoch_cap", c.epoch_cap},
          {"batch_size", c.batch_size},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"clip_gradients", c.clip_gradients},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.alpha0 = j.at("alpha0").get<double>();
  c.total_epochs = j.at("total_epochs").get<std::size_t>();
  c.num_cycles = j.at("num_cycles").get<std::size_t>();
  c.epoch_cap = j.at("epoch_cap").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.clip_gradients = j.at("clip_gradients").get<bool>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointTruncatedError("file ends inside the header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32(std::ostream& os, const Tensor& t) {
  for (double d : t.data) {
    float f = static_cast<float>(d);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
}

inline void read_f32(std::istream& is, Tensor& t, const std::string& what) {
  for (double& d : t.data) {
    float f = 0.0f;
    is.read(reinterpret_cast<char*>(&f), 4);
    if (!is) throw CheckpointTruncatedError("payload ends inside " + what);
    d = static_cast<double>(f);
  }
}

}  // namespace detail

struct LoadedCheckpoint {
  std::unique_ptr<GtiModel> model;
  TrainConfig train_config;
  OptimizerState optimizer;
  std::string shuffle_rng_state;
  std::string dropout_rng_state;
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
};

inline void save_checkpoint(const std::string& path, GtiModel& model, Trainer& trainer,
                            double best_score = -1.0, std::size_t best_epoch = 0) {
  ParamStore& ps = model.params();
  nlohmann::json params = nlohmann::json::array();
  for (const std::string& name : ps.names()) {
    const Node& n = ps.at(name);
    params.push_back({{"name", name},
                      {"rows", n.value.rows},
                      {"cols", n.value.cols},
                      {"trainable", n.requires_grad}});
  }
  nlohmann::json manifest = {
      {"version", kCheckpointVersion},
      {"model", detail::spec_to_json(model.spec())},
      {"train", detail::train_to_json(trainer.config())},
      {"params", params},
      {"optimizer_t", trainer.optimizer().t},
      {"epoch", trainer.epoch()},
      {"best_epoch", best_epoch},
      {"best_score", best_score},
      {"shuffle_rng", rng_state_string(trainer.shuffle_rng())},
      {"dropout_rng", rng_state_string(trainer.dropout_rng())},
  };
  std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataNotFoundError("cannot write checkpoint '" + path + "'");
  os.write(kCheckpointMagic, 4);
  detail::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const std::string& name : ps.names()) detail::write_f32(os, ps.at(name).value);
  OptimizerState& st = trainer.optimizer();
  for (const std::string& name : ps.names()) {
    Node& n = ps.at(name);
    if (n.requires_grad) detail::write_f32(os, st.slot(st.m, name, n.value));
  }
  for (const std::string& name : ps.names()) {
    Node& n = ps.at(name);
    if (n.requires_grad) detail::write_f32(os, st.slot(st.v, name, n.value));
  }
  if (!os) throw DataNotFoundError("short write to checkpoint '" + path + "'");
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataNotFoundError("checkpoint '" + path + "' not found");

  char magic[4] = {};
  is.read(magic, 4);
  if (!is) throw CheckpointTruncatedError("file shorter than the magic");
  if (std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw CheckpointVersionError("bad magic '" + std::string(magic, 4) + "'");
  std::uint64_t len = detail::read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointTruncatedError("file ends inside the manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointVersionError(std::string("manifest is not valid JSON: ") + e.what());
  }
  LoadedCheckpoint out;
  try {
    int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw CheckpointVersionError("version " + std::to_string(version) +
                                   ", this build reads " +
                                   std::to_string(kCheckpointVersion));
    out.model = std::make_unique<GtiModel>(detail::spec_from_json(manifest.at("model")));
    out.train_config = detail::train_from_json(manifest.at("train"));
    out.optimizer.t = manifest.at("optimizer_t").get<std::uint64_t>();
    out.epoch = manifest.at("epoch").get<std::size_t>();
    out.best_epoch = manifest.at("best_epoch").get<std::size_t>();
    out.best_score = manifest.at("best_score").get<double>();
    out.shuffle_rng_state = manifest.at("shuffle_rng").get<std::string>();
    out.dropout_rng_state = manifest.at("dropout_rng").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointVersionError(std::string("manifest key missing or mistyped: ") +
                                 e.what());
  }

  ParamStore& ps = out.model->params();
  struct Entry {
    std::string name;
    bool trainable;
  };
  std::vector<Entry> order;
  for (const nlohmann::json& p : manifest.at("params")) {
    Entry e{p.at("name").get<std::string>(), p.at("trainable").get<bool>()};
    if (!ps.contains(e.name))
      throw CheckpointShapeError("parameter '" + e.name +
                                 "' absent from the rebuilt model");
    Node& n = ps.at(e.name);
    if (n.value.rows != p.at("rows").get<std::size_t>() ||
        n.value.cols != p.at("cols").get<std::size_t>())
      throw CheckpointShapeError("parameter '" + e.name + "' is " +
                                 n.value.shape_str() + ", checkpoint has " +
                                 std::to_string(p.at("rows").get<std::size_t>()) + "x" +
                                 std::to_string(p.at("cols").get<std::size_t>()));
    if (n.requires_grad != e.trainable)
      throw CheckpointShapeError("parameter '" + e.name +
                                 "' disagrees on trainability");
    order.push_back(std::move(e));
  }
  if (order.size() != ps.names().size())
    throw CheckpointShapeError("checkpoint lists " + std::to_string(order.size()) +
                               " parameters, model has " +
                               std::to_string(ps.names().size()));

  for (const Entry& e : order)
    detail::read_f32(is, ps.at(e.name).value, "parameter '" + e.name + "'");
  for (const Entry& e : order) {
    if (!e.trainable) continue;
    Node& n = ps.at(e.name);
    detail::read_f32(is, out.optimizer.slot(out.optimizer.m, e.name, n.value),
                     "first moment of '" + e.name + "'");
  }
  for (const Entry& e : order) {
    if (!e.trainable) continue;
    Node& n = ps.at(e.name);
    detail::read_f32(is, out.optimizer.slot(out.optimizer.v, e.name, n.value),
                     "second moment of '" + e.name + "'");
  }
  return out;
}

// Rebuilds a trainer mid-run: optimizer moments, rng streams and the
// epoch counter all pick up exactly where the checkpoint left them.
inline Trainer resume_trainer(GtiModel& model, LoadedCheckpoint& ck) {
  Trainer tr(model, ck.train_config);
  tr.optimizer() = std::move(ck.optimizer);
  rng_restore_state(tr.shuffle_rng(), ck.shuffle_rng_state);
  rng_restore_state(tr.dropout_rng(), ck.dropout_rng_state);
  tr.set_epoch(ck.epoch);
  return tr;
}

}  // namespace gti
