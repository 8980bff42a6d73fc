#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gti/crf.hpp"
#include "gti/data.hpp"
#include "gti/errors.hpp"
#include "gti/graph.hpp"
#include "gti/nn.hpp"
#include "gti/params.hpp"

namespace gti {

// Multi-task tagger: a shared feature layer feeds one encoder per task;
// auxiliary heads predict their tags with CRFs, and the interaction
// layer embeds those predictions, re-encodes them and (optionally)
// gates them against the main representation before the main head.

enum class Variant {
  kSingle1,   // main path only
  kSingle2,   // main path + gold aux tags embedded as input features
  kVanilla,   // aux heads trained, no interaction (z_f = 0)
  kPipeline,  // predicted aux tags embedded into the main encoder input
  kTi,        // interaction without the gate: z_f = W_f * sum(g_hat_k)
  kGti,       // full gated interaction
};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSingle1: return "single1";
    case Variant::kSingle2: return "single2";
    case Variant::kVanilla: return "vanilla";
    case Variant::kPipeline: return "pipeline";
    case Variant::kTi: return "ti";
    case Variant::kGti: return "gti";
  }
  throw ArgumentError("bad variant");
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "single1") return Variant::kSingle1;
  if (s == "single2") return Variant::kSingle2;
  if (s == "vanilla") return Variant::kVanilla;
  if (s == "pipeline") return Variant::kPipeline;
  if (s == "ti") return Variant::kTi;
  if (s == "gti") return Variant::kGti;
  throw ArgumentError("unknown variant '" + s +
                      "' (single1|single2|vanilla|pipeline|ti|gti)");
}

struct TaskConfig {
  std::string name;
  bool is_span = true;
  std::vector<std::string> tags;  // id order fixes the CRF state order
};

struct ModelSpec {
  std::size_t d_word = 100;
  std::size_t d_char = 0;  // 0 means d_word
  std::size_t n_char_filters = 30;
  std::size_t char_filter_width = 3;
  std::size_t d_h = 200;
  std::size_t d_label = 50;
  double dropout = 0.25;
  bool use_iobes_mask = false;
  bool normalize_digits = false;  // encoding-time choice, must survive a reload
  Variant variant = Variant::kGti;
  std::uint64_t seed = 1;

  std::vector<std::string> word_vocab;  // id -> surface token
  std::vector<std::string> char_vocab;
  std::vector<TaskConfig> aux;
  TaskConfig main;

  std::size_t K() const { return aux.size(); }
  std::size_t d_char_eff() const { return d_char ? d_char : d_word; }
  std::size_t base_input_dim() const {
    return d_word + n_char_filters + kNumWordFormats;
  }
  bool label_features_in_input() const {
    return variant == Variant::kSingle2 || variant == Variant::kPipeline;
  }
  std::size_t main_input_dim() const {
    return base_input_dim() + (label_features_in_input() ? K() * d_label : 0);
  }
};

struct ForwardOptions {
  bool with_loss = false;
  double gate_offset = 0.0;  // added to g_hat, for gate-semantics probes
};

struct TaskTrace {
  std::vector<Value> s_aux;      // n x 2d_h
  std::vector<Value> emissions;  // n x t_k
  std::vector<int> one_best;
  Value loss{};
  // interaction intermediates (TI/GTI):
  std::vector<Value> label_emb;  // L^k, n x d_label
  std::vector<Value> h_a;        // n x 2d_h, post-dropout
  std::vector<Value> g_hat;      // n x 2d_h
  std::vector<Value> g;          // n x 2d_h
};

struct ForwardResult {
  std::vector<Value> xs;       // base features, n x base_input_dim
  std::vector<Value> xs_main;  // main encoder input
  std::vector<Value> s_main;   // n x 2d_h
  std::vector<TaskTrace> aux;
  std::vector<Value> z_f;      // n x 2d_h
  std::vector<Value> h_f;      // n x 2d_h
  std::vector<Value> h_main;   // n x 2d_h
  std::vector<Value> em_main;  // n x t_m
  std::vector<int> main_one_best;
  Value main_loss{};
  Value joint{};
};

struct Prediction {
  std::vector<std::vector<int>> aux_tags;
  std::vector<int> main_tags;
};

class GtiModel {
 public:
  explicit GtiModel(ModelSpec spec, const Tensor* word_table = nullptr)
      : spec_(std::move(spec)), ps_(spec_.seed) {
    validate();
    build(word_table);
  }

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  bool mtl() const {
    return spec_.variant == Variant::kVanilla || spec_.variant == Variant::kPipeline ||
           spec_.variant == Variant::kTi || spec_.variant == Variant::kGti;
  }
  bool uses_interaction() const {
    return spec_.variant == Variant::kTi || spec_.variant == Variant::kGti;
  }

  const CrfHead& main_crf() const { return main_crf_; }
  const CrfHead& aux_crf(std::size_t k) const { return aux_crf_[k]; }

  // Names of parameters the variant's forward pass can reach. The full
  // interaction set is allocated for every MTL variant so disconnected
  // gradients are reportable as exact zeros, but only reachable
  // parameters count toward model size.
  std::vector<std::string> used_param_names() const {
    std::unordered_set<std::string> drop;
    auto drop_interaction = [&](bool keep_labels) {
      for (std::size_t k = 0; k < spec_.K(); ++k) {
        std::string p = "gil" + std::to_string(k);
        if (!keep_labels) drop.insert(p + ".label");
        for (const char* gate : {"w_i", "w_f", "w_g", "w_o", "u_i", "u_f", "u_g", "u_o",
                                 "b_i", "b_f", "b_g", "b_o"}) {
          drop.insert(p + ".trans.fw." + std::string(gate));
          drop.insert(p + ".trans.bw." + std::string(gate));
        }
        drop.insert(p + ".compose_w");
        drop.insert(p + ".compose_u");
      }
      drop.insert("gil.sum.w");
    };
    if (spec_.variant == Variant::kVanilla) drop_interaction(false);
    if (spec_.variant == Variant::kPipeline) drop_interaction(true);
    std::vector<std::string> out;
    for (const std::string& n : ps_.names())
      if (!drop.count(n)) out.push_back(n);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (const std::string& n : used_param_names()) c += ps_.at(n).value.size();
    return c;
  }

  bool is_interaction_param(const std::string& name) const {
    return name.rfind("gil", 0) == 0;
  }

  ForwardResult forward(Graph& g, const EncodedSentence& s, Mode mode,
                        std::mt19937_64* rng, const ForwardOptions& opt = {}) {
    if (s.size() == 0) throw ArgumentError("forward: empty sentence");
    if (mode == Mode::kTrain && rng == nullptr)
      throw ArgumentError("forward: train mode needs an rng for dropout");
    std::size_t n = s.size();
    std::size_t K = spec_.K();
    if (opt.with_loss) {
      if (s.tags.size() != n_tasks())
        throw ArgumentError("joint_loss: expected gold tags for " +
                            std::to_string(n_tasks()) + " tasks, got " +
                            std::to_string(s.tags.size()));
      for (const auto& tg : s.tags)
        if (tg.size() != n) throw ArgumentError("joint_loss: gold length mismatch");
    }

    ForwardResult r;
    r.xs = embed_tokens(g, s);
    r.aux.resize(K);

    auto encode = [&](const BiLstm& enc, const std::vector<Value>& xs) {
      std::vector<Value> dropped;
      dropped.reserve(xs.size());
      for (const Value& x : xs)
        dropped.push_back(apply_dropout(g, x, spec_.dropout, mode, *rng_or(rng, mode)));
      return bilstm_forward(g, enc, dropped);
    };

    // Aux heads run first; PIPELINE needs their one-best before the
    // main encoder sees its input.
    if (mtl()) {
      for (std::size_t k = 0; k < K; ++k) {
        TaskTrace& t = r.aux[k];
        t.s_aux = encode(enc_aux_[k], r.xs);
        t.emissions.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
          t.emissions.push_back(linear_forward(g, aux_head_[k], t.s_aux[i]));
        t.one_best = viterbi_decode(aux_crf_[k], t.emissions).tags;
        if (opt.with_loss)
          t.loss = crf_nll(g, aux_crf_[k], t.emissions, s.tags[k]);
      }
    }

    r.xs_main = main_input(g, r, s);
    r.s_main = encode(enc_main_, r.xs_main);

    if (uses_interaction()) {
      std::vector<std::vector<Value>> gk(K);
      for (std::size_t k = 0; k < K; ++k) {
        TaskTrace& t = r.aux[k];
        compose_gate(g, k, t, r.s_main, mode, rng, opt);
        gk[k] = t.g;
      }
      std::vector<Value> summed = gk[0];
      for (std::size_t k = 1; k < K; ++k)
        for (std::size_t i = 0; i < n; ++i) summed[i] = g.add(summed[i], gk[k][i]);
      Value wf = g.param(*sum_w_);
      r.z_f.reserve(n);
      for (std::size_t i = 0; i < n; ++i) r.z_f.push_back(g.matvec(wf, summed[i]));
    } else {
      for (std::size_t i = 0; i < n; ++i) r.z_f.push_back(g.zeros(2 * spec_.d_h));
    }

    // h_f = tanh(W_m S_m + z_f); the main encoder runs over its dropout.
    Value wm = g.param(*project_w_);
    r.h_f.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      r.h_f.push_back(g.tanh_(g.add(g.matvec(wm, r.s_main[i]), r.z_f[i])));
    {
      std::vector<Value> dropped;
      dropped.reserve(n);
      for (const Value& h : r.h_f)
        dropped.push_back(apply_dropout(g, h, spec_.dropout, mode, *rng_or(rng, mode)));
      r.h_main = bilstm_forward(g, main_bilstm_, dropped);
    }
    r.em_main.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      r.em_main.push_back(linear_forward(g, main_head_, r.h_main[i]));
    r.main_one_best = viterbi_decode(main_crf_, r.em_main).tags;

    if (opt.with_loss) {
      r.main_loss = crf_nll(g, main_crf_, r.em_main, s.tags[n_tasks() - 1]);
      r.joint = r.main_loss;
      if (mtl())
        for (std::size_t k = 0; k < K; ++k) r.joint = g.add(r.joint, r.aux[k].loss);
    }
    return r;
  }

  // Mean joint loss over the real sentences of a batch; padding is
  // invisible because rows are processed at their true length.
  Value batch_loss(Graph& g, const Batch& b, Mode mode, std::mt19937_64* rng) {
    if (b.rows() == 0) throw ArgumentError("batch_loss: empty batch");
    ForwardOptions opt;
    opt.with_loss = true;
    Value total{};
    for (std::size_t r = 0; r < b.rows(); ++r) {
      EncodedSentence s = batch_row(b, r);
      Value j = forward(g, s, mode, rng, opt).joint;
      total = total.defined() ? g.add(total, j) : j;
    }
    return g.scale(total, 1.0 / static_cast<double>(b.rows()));
  }

  Prediction predict(const EncodedSentence& s) {
    Graph g;
    ForwardResult r = forward(g, s, Mode::kEval, nullptr);
    Prediction p;
    p.main_tags = r.main_one_best;
    p.aux_tags.resize(spec_.K());
    for (std::size_t k = 0; k < spec_.K(); ++k) p.aux_tags[k] = r.aux[k].one_best;
    return p;
  }

  std::size_t n_tasks() const { return spec_.K() + 1; }  // gold columns, main last

 private:
  void validate() const {
    if (spec_.d_word == 0 || spec_.d_h == 0 || spec_.d_label == 0 ||
        spec_.n_char_filters == 0 || spec_.char_filter_width == 0)
      throw ArgumentError("model dims must be positive");
    if (spec_.word_vocab.size() < 2 || spec_.char_vocab.size() < 2)
      throw ArgumentError("vocabularies must include PAD and UNK");
    if (spec_.main.tags.empty()) throw ArgumentError("main task has no tags");
    for (const TaskConfig& t : spec_.aux)
      if (t.tags.empty()) throw ArgumentError("aux task '" + t.name + "' has no tags");
    if (spec_.variant == Variant::kSingle1 && spec_.K() != 0)
      throw ArgumentError("single1 takes no aux tasks");
    if (spec_.variant != Variant::kSingle1 && spec_.K() == 0)
      throw ArgumentError(variant_name(spec_.variant) + " needs at least one aux task");
  }

  void build(const Tensor* word_table) {
    if (word_table) {
      if (word_table->rows != spec_.word_vocab.size() ||
          word_table->cols != spec_.d_word)
        throw DimensionError("word table " + word_table->shape_str() + ", expected " +
                             std::to_string(spec_.word_vocab.size()) + "x" +
                             std::to_string(spec_.d_word));
      word_table_ = &ps_.adopt("embed.word", *word_table, false);
    } else {
      word_table_ = &ps_.create_uniform("embed.word", spec_.word_vocab.size(),
                                        spec_.d_word, -0.25, 0.25, false);
    }
    format_table_ = &ps_.create("embed.format", kNumWordFormats, kNumWordFormats);
    for (std::size_t i = 0; i < kNumWordFormats; ++i) format_table_->value.at(i, i) = 1.0;

    charcnn_ = make_char_cnn(ps_, "charcnn", spec_.char_vocab.size(), spec_.d_char_eff(),
                             spec_.n_char_filters, spec_.char_filter_width);

    enc_main_ = make_bilstm(ps_, "enc.main", spec_.main_input_dim(), spec_.d_h);
    if (mtl()) {
      for (std::size_t k = 0; k < spec_.K(); ++k)
        enc_aux_.push_back(make_bilstm(ps_, "enc.aux" + std::to_string(k),
                                       spec_.base_input_dim(), spec_.d_h));
      for (std::size_t k = 0; k < spec_.K(); ++k) {
        std::string p = "aux" + std::to_string(k);
        aux_head_.push_back(
            make_linear(ps_, p + ".head", spec_.aux[k].tags.size(), 2 * spec_.d_h));
        aux_crf_.push_back(make_crf_head(ps_, p + ".crf", spec_.aux[k].tags.size()));
        apply_mask(aux_crf_.back(), spec_.aux[k]);
      }
    }

    // Interaction parameters exist for every MTL variant (gradcheck
    // reports exact zeros where the variant leaves them disconnected);
    // SINGLE2 allocates the label tables it embeds gold tags with.
    if (mtl() || spec_.variant == Variant::kSingle2) {
      for (std::size_t k = 0; k < spec_.K(); ++k) {
        std::string p = "gil" + std::to_string(k);
        label_tables_.push_back(&ps_.create_uniform(
            p + ".label", spec_.aux[k].tags.size(), spec_.d_label, -0.5, 0.5));
        if (mtl()) {
          gil_trans_.push_back(make_bilstm(ps_, p + ".trans", spec_.d_label, spec_.d_h));
          compose_w_.push_back(
              &ps_.create_glorot(p + ".compose_w", 2 * spec_.d_h, 2 * spec_.d_h));
          compose_u_.push_back(
              &ps_.create_glorot(p + ".compose_u", 2 * spec_.d_h, 2 * spec_.d_h));
        }
      }
      if (mtl()) sum_w_ = &ps_.create_glorot("gil.sum.w", 2 * spec_.d_h, 2 * spec_.d_h);
    }

    project_w_ = &ps_.create_glorot("main.project.w", 2 * spec_.d_h, 2 * spec_.d_h);
    main_bilstm_ = make_bilstm(ps_, "main.bilstm", 2 * spec_.d_h, spec_.d_h);
    main_head_ = make_linear(ps_, "main.head", spec_.main.tags.size(), 2 * spec_.d_h);
    main_crf_ = make_crf_head(ps_, "main.crf", spec_.main.tags.size());
    apply_mask(main_crf_, spec_.main);
  }

  void apply_mask(CrfHead& head, const TaskConfig& task) {
    if (spec_.use_iobes_mask && task.is_span) head.allowed = build_iobes_mask(task.tags);
  }

  static std::mt19937_64* rng_or(std::mt19937_64* rng, Mode mode) {
    static std::mt19937_64 unused_eval_rng;  // eval path never draws
    return mode == Mode::kEval ? &unused_eval_rng : rng;
  }

  std::vector<Value> embed_tokens(Graph& g, const EncodedSentence& s) {
    std::size_t n = s.size();
    if (s.char_ids.size() != n || s.format_ids.size() != n)
      throw FeatureError("sentence feature arrays disagree in length");
    Value words = g.param(*word_table_);
    Value formats = g.param(*format_table_);
    std::vector<Value> xs;
    xs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      int wid = s.word_ids[i];
      int fid = s.format_ids[i];
      if (wid < 0 || static_cast<std::size_t>(wid) >= spec_.word_vocab.size())
        throw FeatureError("token " + std::to_string(i) + ": unresolved word id " +
                           std::to_string(wid));
      if (fid < 0 || static_cast<std::size_t>(fid) >= kNumWordFormats)
        throw FeatureError("token " + std::to_string(i) + ": unresolved format id " +
                           std::to_string(fid));
      for (int cid : s.char_ids[i])
        if (cid < 0 || static_cast<std::size_t>(cid) >= spec_.char_vocab.size())
          throw FeatureError("token " + std::to_string(i) + ": unresolved char id " +
                             std::to_string(cid));
      Value w = g.row_lookup(words, static_cast<std::size_t>(wid));
      Value c = char_cnn_forward(g, charcnn_, s.char_ids[i]);
      Value f = g.row_lookup(formats, static_cast<std::size_t>(fid));
      xs.push_back(g.concat({w, c, f}));
    }
    return xs;
  }

  // SINGLE2 appends gold-tag embeddings; PIPELINE appends embeddings of
  // the aux heads' one-best. Ids enter as plain integers either way, so
  // no gradient reaches the aux heads through this path.
  std::vector<Value> main_input(Graph& g, ForwardResult& r, const EncodedSentence& s) {
    if (!spec_.label_features_in_input()) return r.xs;
    std::size_t n = s.size();
    std::size_t K = spec_.K();
    std::vector<std::vector<int>> label_ids(K);
    if (spec_.variant == Variant::kSingle2) {
      if (s.tags.size() < K)
        throw FeatureError("single2 needs gold tags for all " + std::to_string(K) +
                           " aux tasks");
      for (std::size_t k = 0; k < K; ++k) {
        if (s.tags[k].size() != n)
          throw FeatureError("single2: gold aux tags missing for task " +
                             std::to_string(k));
        label_ids[k] = s.tags[k];
      }
    } else {  // PIPELINE
      for (std::size_t k = 0; k < K; ++k) label_ids[k] = r.aux[k].one_best;
    }
    std::vector<Value> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Value> parts{r.xs[i]};
      for (std::size_t k = 0; k < K; ++k) {
        int id = label_ids[k][i];
        if (id < 0 || static_cast<std::size_t>(id) >= spec_.aux[k].tags.size())
          throw FeatureError("aux tag id " + std::to_string(id) + " out of range");
        parts.push_back(
            g.row_lookup(g.param(*label_tables_[k]), static_cast<std::size_t>(id)));
      }
      out.push_back(g.concat(parts));
    }
    return out;
  }

  // L^k = Lemb(Y^k); h_a^k = Trans^k over dropout(L^k), then dropout;
  // g_hat = W_k h_a + U_k S_m (no bias); GTI gates, TI passes g_hat.
  void compose_gate(Graph& g, std::size_t k, TaskTrace& t,
                    const std::vector<Value>& s_main, Mode mode, std::mt19937_64* rng,
                    const ForwardOptions& opt) {
    std::size_t n = t.one_best.size();
    Value table = g.param(*label_tables_[k]);
    t.label_emb.reserve(n);
    for (int id : t.one_best)
      t.label_emb.push_back(g.row_lookup(table, static_cast<std::size_t>(id)));
    std::vector<Value> dropped;
    dropped.reserve(n);
    for (const Value& l : t.label_emb)
      dropped.push_back(apply_dropout(g, l, spec_.dropout, mode, *rng_or(rng, mode)));
    std::vector<Value> trans_out = bilstm_forward(g, gil_trans_[k], dropped);
    t.h_a.reserve(n);
    for (const Value& h : trans_out)
      t.h_a.push_back(apply_dropout(g, h, spec_.dropout, mode, *rng_or(rng, mode)));

    Value wk = g.param(*compose_w_[k]);
    Value uk = g.param(*compose_u_[k]);
    t.g_hat.reserve(n);
    t.g.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Value gh = g.add(g.matvec(wk, t.h_a[i]), g.matvec(uk, s_main[i]));
      if (opt.gate_offset != 0.0)
        gh = g.add(gh, g.constant(Tensor(2 * spec_.d_h, 1, opt.gate_offset)));
      t.g_hat.push_back(gh);
      if (spec_.variant == Variant::kGti) {
        t.g.push_back(g.mul(g.sigmoid(gh), t.h_a[i]));
      } else {  // TI
        t.g.push_back(gh);
      }
    }
  }

  ModelSpec spec_;
  ParamStore ps_;
  Node* word_table_ = nullptr;
  Node* format_table_ = nullptr;
  CharCnn charcnn_;
  BiLstm enc_main_;
  std::vector<BiLstm> enc_aux_;
  std::vector<Linear> aux_head_;
  std::vector<CrfHead> aux_crf_;
  std::vector<Node*> label_tables_;
  std::vector<BiLstm> gil_trans_;
  std::vector<Node*> compose_w_;
  std::vector<Node*> compose_u_;
  Node* sum_w_ = nullptr;
  Node* project_w_ = nullptr;
  BiLstm main_bilstm_;
  Linear main_head_;
  CrfHead main_crf_;
};

}  // namespace gti
