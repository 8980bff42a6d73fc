#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gti/checkpoint.hpp"
#include "gti/data.hpp"
#include "gti/errors.hpp"
#include "gti/eval.hpp"
#include "gti/gradcheck.hpp"
#include "gti/model.hpp"
#include "gti/train.hpp"

namespace gti {

// End-to-end runners shared by the command line and the tests: they own
// file layout, vocabulary construction and reporting, and leave the math
// to the model and trainer.

struct JobSpec {
  std::string data_format = "conll2003";
  std::string main_task;
  std::vector<std::string> aux_tasks;
  std::string variant = "gti";

  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string embeddings_path;
  std::string checkpoint_path;
  std::string input_path;
  std::string output_path;
  std::string out_dir = "out";

  std::size_t state_size = 200;
  std::size_t d_word = 100;
  std::size_t d_char = 0;
  std::size_t n_char_filters = 30;
  std::size_t char_filter_width = 3;
  std::size_t d_label = 50;
  double dropout = 0.25;
  double alpha0 = 0.001;
  std::size_t epochs = 70;
  std::size_t batch_size = 10;
  std::size_t val_count = 1000;
  std::uint64_t seed = 1;
  bool use_iobes_mask = false;
  bool normalize_digits = false;
  bool clip_gradients = false;
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3, 4, 5};
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataNotFoundError("cannot open '" + path + "' for hashing");
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

namespace detail {

struct TaskLayout {
  std::vector<std::string> columns;       // file columns after the token
  std::vector<std::string> tasks;         // aux order, then main
  std::vector<std::size_t> col_of_task;   // into columns
  std::vector<bool> span_of_task;
};

inline TaskLayout make_layout(const std::string& data_format, const std::string& main_task,
                              const std::vector<std::string>& aux_tasks) {
  TaskLayout L;
  L.columns = format_columns(data_format);
  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < L.columns.size(); ++i)
      if (L.columns[i] == name) return i;
    throw ArgumentError("task '" + name + "' is not a column of " + data_format);
  };
  if (main_task.empty()) throw ArgumentError("no main task given");
  std::vector<std::string> names = aux_tasks;
  names.push_back(main_task);
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j]) throw ArgumentError("task '" + names[i] + "' repeats");
  for (const std::string& name : names) {
    L.tasks.push_back(name);
    L.col_of_task.push_back(col_index(name));
    L.span_of_task.push_back(column_is_span(name));
  }
  return L;
}

// Span columns train and decode in IOBES; conversion repairs rather
// than rejects dangling continuations.
inline std::size_t to_iobes_columns(std::vector<RawSentence>& data, const TaskLayout& L) {
  std::vector<std::string> log;
  for (RawSentence& s : data)
    for (std::size_t t = 0; t < L.tasks.size(); ++t)
      if (L.span_of_task[t]) {
        std::size_t c = L.col_of_task[t];
        s.columns[c] = to_iobes(s.columns[c], &log);
      }
  return log.size();
}

struct EncoderSetup {
  Vocab words = Vocab::open_vocab();
  Vocab chars = Vocab::open_vocab();
  std::vector<Vocab> tags;  // per task, closed
  bool digits = false;
};

inline std::string word_key(const EncoderSetup& e, const std::string& token) {
  return e.digits ? normalize_digits(token) : token;
}

inline EncoderSetup build_vocabs(const std::vector<RawSentence>& train,
                                 const std::vector<RawSentence>& dev, const TaskLayout& L,
                                 bool digits) {
  EncoderSetup e;
  e.digits = digits;
  for (const RawSentence& s : train)
    for (const std::string& tok : s.tokens) {
      e.words.add(word_key(e, tok));
      for (char ch : tok) e.chars.add(std::string(1, ch));
    }
  e.tags.assign(L.tasks.size(), Vocab::closed_vocab());
  for (const std::vector<RawSentence>* part : {&train, &dev})
    for (const RawSentence& s : *part)
      for (std::size_t t = 0; t < L.tasks.size(); ++t)
        for (const std::string& tag : s.columns[L.col_of_task[t]]) e.tags[t].add(tag);
  return e;
}

inline Vocab vocab_from_tokens(const std::vector<std::string>& tokens, bool open) {
  Vocab v;
  v.open = open;
  for (const std::string& t : tokens) v.add(t);
  return v;
}

inline EncoderSetup setup_from_spec(const ModelSpec& spec) {
  EncoderSetup e;
  e.digits = spec.normalize_digits;
  e.words = vocab_from_tokens(spec.word_vocab, true);
  e.chars = vocab_from_tokens(spec.char_vocab, true);
  for (const TaskConfig& t : spec.aux) e.tags.push_back(vocab_from_tokens(t.tags, false));
  e.tags.push_back(vocab_from_tokens(spec.main.tags, false));
  return e;
}

// n_tag_tasks limits how many leading task columns carry gold tags in
// the input: all for train/eval, K for the gold-featured variant's
// prediction input, zero for plain prediction.
inline EncodedSentence encode_sentence(const RawSentence& s, const EncoderSetup& e,
                                       const TaskLayout& L, std::size_t n_tag_tasks) {
  EncodedSentence out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const std::string& tok = s.tokens[i];
    out.word_ids.push_back(e.words.lookup(word_key(e, tok)));
    std::vector<int> cs;
    cs.reserve(tok.size());
    for (char ch : tok) cs.push_back(e.chars.lookup(std::string(1, ch)));
    out.char_ids.push_back(std::move(cs));
    out.format_ids.push_back(static_cast<int>(classify_word_format(tok)));
  }
  out.tags.resize(n_tag_tasks);
  for (std::size_t t = 0; t < n_tag_tasks; ++t) {
    const std::vector<std::string>& col = s.columns[L.col_of_task[t]];
    for (const std::string& tag : col) out.tags[t].push_back(e.tags[t].lookup(tag));
  }
  return out;
}

inline std::vector<EncodedSentence> encode_corpus(const std::vector<RawSentence>& data,
                                                  const EncoderSetup& e,
                                                  const TaskLayout& L,
                                                  std::size_t n_tag_tasks) {
  std::vector<EncodedSentence> out;
  out.reserve(data.size());
  for (const RawSentence& s : data) out.push_back(encode_sentence(s, e, L, n_tag_tasks));
  return out;
}

// Tags absent from the trained inventory mean the checkpoint and the
// data disagree about the label set.
inline std::vector<EncodedSentence> encode_eval_corpus(const std::vector<RawSentence>& data,
                                                       const EncoderSetup& e,
                                                       const TaskLayout& L,
                                                       std::size_t n_tag_tasks) {
  try {
    return encode_corpus(data, e, L, n_tag_tasks);
  } catch (const LookupError& err) {
    throw ConfigMismatchError(std::string(err.what()) + " (not seen at train time)");
  }
}

inline ModelSpec make_model_spec(const JobSpec& j, const EncoderSetup& e,
                                 const TaskLayout& L) {
  ModelSpec s;
  s.d_word = j.d_word;
  s.d_char = j.d_char;
  s.n_char_filters = j.n_char_filters;
  s.char_filter_width = j.char_filter_width;
  s.d_h = j.state_size;
  s.d_label = j.d_label;
  s.dropout = j.dropout;
  s.use_iobes_mask = j.use_iobes_mask;
  s.normalize_digits = j.normalize_digits;
  s.variant = variant_from_name(j.variant);
  s.seed = j.seed;
  s.word_vocab = e.words.id_to_token;
  s.char_vocab = e.chars.id_to_token;
  for (std::size_t t = 0; t + 1 < L.tasks.size(); ++t)
    s.aux.push_back({L.tasks[t], L.span_of_task[t], e.tags[t].id_to_token});
  s.main = {L.tasks.back(), L.span_of_task.back(), e.tags.back().id_to_token};
  return s;
}

inline TrainConfig make_train_config(const JobSpec& j) {
  TrainConfig c;
  c.alpha0 = j.alpha0;
  c.epoch_cap = j.epochs;
  c.batch_size = j.batch_size;
  c.clip_gradients = j.clip_gradients;
  c.seed = j.seed;
  return c;
}

// The trained task names pin the column layout: anything tagging ner
// came from the four-column format.
inline std::string infer_data_format(const ModelSpec& spec) {
  for (const TaskConfig& t : spec.aux)
    if (t.name == "ner") return "conll2003";
  return spec.main.name == "ner" ? "conll2003" : "conll2000";
}

}  // namespace detail

inline std::size_t inference_threads() {
  const char* env = std::getenv("GTI_THREADS");
  if (!env || *env == '\0') return 1;
  long v = std::strtol(env, nullptr, 10);
  if (v <= 1) return 1;
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min(static_cast<std::size_t>(v), hw);
}

// Inference over a corpus, fanned out across GTI_THREADS workers.
// Results land by sentence index, so the output order never depends on
// scheduling.
inline std::vector<Prediction> predict_corpus(GtiModel& model,
                                              const std::vector<EncodedSentence>& data) {
  for (const std::string& name : model.params().names())
    model.params().at(name).ensure_grad();  // pre-size shared state before fan-out
  std::vector<Prediction> out(data.size());
  std::size_t nt = std::min(inference_threads(), std::max<std::size_t>(data.size(), 1));
  if (nt <= 1) {
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.predict(data[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= data.size()) return;
      try {
        out[i] = model.predict(data[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < nt; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

struct EvalOutcome {
  bool span = true;
  EvalReport report;       // span main task
  double accuracy = 0.0;   // non-span main task
};

inline EvalOutcome evaluate_main(GtiModel& model, const std::vector<EncodedSentence>& data) {
  if (data.empty()) throw ArgumentError("evaluate: no sentences");
  std::size_t main_idx = model.n_tasks() - 1;
  const TaskConfig& task = model.spec().main;
  std::vector<Prediction> preds = predict_corpus(model, data);
  EvalOutcome out;
  out.span = task.is_span;
  if (task.is_span) {
    std::vector<std::vector<std::string>> gold(data.size()), pred(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (int id : data[i].tags[main_idx])
        gold[i].push_back(task.tags[static_cast<std::size_t>(id)]);
      for (int id : preds[i].main_tags)
        pred[i].push_back(task.tags[static_cast<std::size_t>(id)]);
    }
    out.report = micro_f1(gold, pred);
  } else {
    std::vector<std::vector<int>> gold(data.size()), pred(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      gold[i] = data[i].tags[main_idx];
      pred[i] = preds[i].main_tags;
    }
    out.accuracy = token_accuracy(gold, pred);
  }
  return out;
}

inline std::string render_outcome(const EvalOutcome& o) {
  if (o.span) return render_report(o.report);
  std::ostringstream os;
  os << "token_accuracy=" << o.accuracy << "\n";
  return os.str();
}

struct TrainRunResult {
  std::size_t best_epoch = 0;
  double best_score = -1.0;
  std::size_t epochs_run = 0;
  bool has_test = false;
  EvalOutcome test;
  std::string checkpoint_path;
};

inline TrainRunResult run_train(const JobSpec& job, std::ostream& log = std::cout) {
  detail::TaskLayout L = detail::make_layout(job.data_format, job.main_task, job.aux_tasks);
  if (job.variant == "single1" && !job.aux_tasks.empty())
    throw ArgumentError("single1 takes no aux tasks");
  if (job.train_path.empty()) throw ArgumentError("no training data given");

  std::size_t n_columns = 1 + L.columns.size();
  std::vector<RawSentence> train_raw = parse_conll_file(job.train_path, n_columns);
  if (train_raw.empty()) throw ParseError(job.train_path + ": no sentences");
  std::vector<RawSentence> dev_raw;
  if (!job.dev_path.empty()) {
    dev_raw = parse_conll_file(job.dev_path, n_columns);
  } else {
    std::tie(train_raw, dev_raw) = split_validation(train_raw, job.val_count, job.seed);
  }
  std::size_t repairs = detail::to_iobes_columns(train_raw, L);
  repairs += detail::to_iobes_columns(dev_raw, L);

  detail::EncoderSetup enc =
      detail::build_vocabs(train_raw, dev_raw, L, job.normalize_digits);
  std::vector<EncodedSentence> train =
      detail::encode_corpus(train_raw, enc, L, L.tasks.size());
  std::vector<EncodedSentence> dev = detail::encode_corpus(dev_raw, enc, L, L.tasks.size());

  ModelSpec spec = detail::make_model_spec(job, enc, L);
  Tensor table;
  EmbeddingLoadStats emb_stats;
  bool have_table = false;
  if (!job.embeddings_path.empty()) {
    table = load_pretrained_embeddings_file(job.embeddings_path, enc.words, job.seed,
                                            &emb_stats);
    spec.d_word = table.cols;
    have_table = true;
  }
  GtiModel model(spec, have_table ? &table : nullptr);

  std::filesystem::create_directories(job.out_dir);
  std::string ckpt = job.out_dir + "/best.ckpt";
  std::ofstream epoch_log(job.out_dir + "/train_log.jsonl", std::ios::trunc);

  Trainer trainer(model, detail::make_train_config(job));
  FitResult fit = trainer.fit(train, dev, [&](const EpochStats& st) {
    nlohmann::json line = {{"epoch", st.epoch},
                           {"lr", st.lr},
                           {"train_loss", st.train_loss},
                           {"dev_score", st.dev_score},
                           {"best", st.is_best}};
    epoch_log << line.dump() << "\n";
    epoch_log.flush();
    log << "epoch " << st.epoch << " lr=" << st.lr << " loss=" << st.train_loss
        << " dev=" << st.dev_score << (st.is_best ? " *" : "") << "\n";
    if (st.is_best) save_checkpoint(ckpt, model, trainer, st.dev_score, st.epoch);
  });

  TrainRunResult res;
  res.best_epoch = fit.best_epoch;
  res.best_score = fit.best_score;
  res.epochs_run = fit.epochs_run;
  res.checkpoint_path = ckpt;

  nlohmann::json files = nlohmann::json::object();
  auto add_file = [&](const char* key, const std::string& path) {
    if (!path.empty()) files[key] = {{"path", path}, {"fnv1a64", file_hash_hex(path)}};
  };
  add_file("train", job.train_path);
  add_file("dev", job.dev_path);
  add_file("test", job.test_path);
  add_file("embeddings", job.embeddings_path);
  nlohmann::json manifest = {
      {"command", "train"},
      {"data_format", job.data_format},
      {"main_task", job.main_task},
      {"aux_tasks", job.aux_tasks},
      {"variant", job.variant},
      {"seed", job.seed},
      {"state_size", job.state_size},
      {"batch_size", job.batch_size},
      {"epochs", job.epochs},
      {"alpha0", job.alpha0},
      {"dropout", job.dropout},
      {"use_iobes_mask", job.use_iobes_mask},
      {"normalize_digits", job.normalize_digits},
      {"parameter_count", model.parameter_count()},
      {"word_vocab_size", enc.words.size()},
      {"char_vocab_size", enc.chars.size()},
      {"iobes_repairs", repairs},
      {"best_epoch", fit.best_epoch},
      {"best_dev_score", fit.best_score},
      {"epochs_run", fit.epochs_run},
      {"files", files},
  };
  if (have_table)
    manifest["embedding_stats"] = {{"dim", emb_stats.dim},
                                   {"exact", emb_stats.found_exact},
                                   {"folded", emb_stats.found_folded},
                                   {"oov", emb_stats.oov}};
  std::ofstream(job.out_dir + "/run.json") << manifest.dump(2) << "\n";

  if (!job.test_path.empty()) {
    std::vector<RawSentence> test_raw = parse_conll_file(job.test_path, n_columns);
    detail::to_iobes_columns(test_raw, L);
    std::vector<EncodedSentence> test =
        detail::encode_eval_corpus(test_raw, enc, L, L.tasks.size());
    res.test = evaluate_main(model, test);
    res.has_test = true;
    std::ofstream(job.out_dir + "/test_report.txt")
        << (res.test.span ? serialize_report(res.test.report) : render_outcome(res.test));
    log << render_outcome(res.test);
  }
  return res;
}

inline EvalOutcome run_eval(const JobSpec& job, std::ostream& log = std::cout) {
  if (job.checkpoint_path.empty()) throw ArgumentError("no checkpoint given");
  if (job.test_path.empty()) throw ArgumentError("no data to evaluate");
  LoadedCheckpoint ck = load_checkpoint(job.checkpoint_path);
  GtiModel& model = *ck.model;
  const ModelSpec& spec = model.spec();

  std::string fmt = job.data_format.empty() ? detail::infer_data_format(spec)
                                            : job.data_format;
  std::vector<std::string> aux_names;
  for (const TaskConfig& t : spec.aux) aux_names.push_back(t.name);
  detail::TaskLayout L = detail::make_layout(fmt, spec.main.name, aux_names);

  std::vector<RawSentence> raw = parse_conll_file(job.test_path, 1 + L.columns.size());
  detail::to_iobes_columns(raw, L);
  detail::EncoderSetup enc = detail::setup_from_spec(spec);
  std::vector<EncodedSentence> data =
      detail::encode_eval_corpus(raw, enc, L, L.tasks.size());

  EvalOutcome out = evaluate_main(model, data);
  log << render_outcome(out);
  if (!job.output_path.empty())
    std::ofstream(job.output_path)
        << (out.span ? serialize_report(out.report) : render_outcome(out));
  return out;
}

// Tags each sentence of a token-only file (the gold-featured variant
// additionally expects its aux tag columns). Output echoes the input
// columns and appends one column per predicted task.
inline void run_predict(const JobSpec& job, std::ostream& out_stream,
                        std::ostream& log = std::cerr) {
  (void)log;
  if (job.checkpoint_path.empty()) throw ArgumentError("no checkpoint given");
  if (job.input_path.empty()) throw ArgumentError("no input given");
  LoadedCheckpoint ck = load_checkpoint(job.checkpoint_path);
  GtiModel& model = *ck.model;
  const ModelSpec& spec = model.spec();
  std::size_t K = spec.K();
  bool gold_featured = spec.variant == Variant::kSingle2;

  std::size_t n_columns = 1 + (gold_featured ? K : 0);
  std::vector<RawSentence> raw = parse_conll_file(job.input_path, n_columns);

  // Layout covers only the aux tag columns; the input never carries the
  // main column.
  detail::EncoderSetup enc = detail::setup_from_spec(spec);
  detail::TaskLayout L;
  if (gold_featured) {
    for (std::size_t k = 0; k < K; ++k) {
      L.columns.push_back(spec.aux[k].name);
      L.tasks.push_back(spec.aux[k].name);
      L.col_of_task.push_back(k);
      L.span_of_task.push_back(spec.aux[k].is_span);
    }
    detail::to_iobes_columns(raw, L);
  }

  std::vector<EncodedSentence> data =
      detail::encode_eval_corpus(raw, enc, L, gold_featured ? K : 0);
  std::vector<Prediction> preds = predict_corpus(model, data);

  bool predict_aux = model.mtl();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t t = 0; t < raw[i].tokens.size(); ++t) {
      out_stream << raw[i].tokens[t];
      for (const auto& col : raw[i].columns) out_stream << ' ' << col[t];
      if (predict_aux)
        for (std::size_t k = 0; k < K; ++k)
          out_stream << ' '
                     << spec.aux[k].tags[static_cast<std::size_t>(preds[i].aux_tags[k][t])];
      out_stream << ' '
                 << spec.main.tags[static_cast<std::size_t>(preds[i].main_tags[t])];
      out_stream << '\n';
    }
    out_stream << '\n';
  }
}

// Fixed desk-size model over a tiny synthetic corpus; checks every
// trainable parameter against central differences.
inline GradCheckReport run_gradcheck(const std::string& variant_name_arg,
                                     std::uint64_t seed, std::ostream& log = std::cout) {
  ModelSpec spec;
  spec.d_word = 8;
  spec.d_char = 8;
  spec.n_char_filters = 4;
  spec.char_filter_width = 3;
  spec.d_h = 8;
  spec.d_label = 6;
  spec.dropout = 0.25;  // irrelevant: the checked loss runs in eval mode
  spec.variant = variant_from_name(variant_name_arg);
  spec.seed = seed;
  spec.word_vocab = {"<PAD>", "<UNK>", "aa", "bb", "cc", "dd", "ee", "ff"};
  spec.char_vocab = {"<PAD>", "<UNK>", "a", "b", "c", "d", "e", "f"};
  if (spec.variant != Variant::kSingle1) {
    spec.aux.push_back({"pos", false, {"P0", "P1", "P2"}});
    spec.aux.push_back({"chunk", true, {"O", "B-N", "I-N", "E-N", "S-N"}});
  }
  spec.main = {"ner", true, {"O", "B-E", "I-E", "E-E", "S-E"}};
  GtiModel model(spec);

  std::vector<EncodedSentence> data;
  auto sent = [&](std::vector<int> words, std::vector<int> pos, std::vector<int> chunk,
                  std::vector<int> ner) {
    EncodedSentence s;
    s.word_ids = words;
    for (int w : words) {
      s.char_ids.push_back({w % 6 + 2, (w + 1) % 6 + 2});
      s.format_ids.push_back(w % static_cast<int>(kNumWordFormats));
    }
    if (spec.variant == Variant::kSingle1) {
      s.tags = {ner};
    } else {
      s.tags = {pos, chunk, ner};
    }
    data.push_back(std::move(s));
  };
  sent({2, 3, 4}, {0, 1, 2}, {1, 3, 0}, {4, 0, 4});
  sent({5, 6, 7, 2, 3}, {2, 1, 0, 1, 2}, {0, 1, 2, 3, 4}, {0, 1, 2, 3, 0});
  sent({4, 7, 6, 5}, {1, 1, 0, 2}, {4, 0, 1, 3}, {1, 3, 0, 4});

  auto build_loss = [&](Graph& g) {
    ForwardOptions opt;
    opt.with_loss = true;
    Value total{};
    for (const EncodedSentence& s : data) {
      Value j = model.forward(g, s, Mode::kEval, nullptr, opt).joint;
      total = total.defined() ? g.add(total, j) : j;
    }
    return total;
  };

  GradCheckReport report = check_gradients(model.params(), build_loss, 1e-5);
  log << "gradcheck variant=" << variant_name_arg << " params=" << report.params.size()
      << " max_rel_error=" << report.max_rel_error << " worst=" << report.worst_param
      << "\n";
  if (!report.corrupted_op.empty())
    log << "backward hook active on op '" << report.corrupted_op << "'\n";
  if (model.spec().variant == Variant::kVanilla) {
    for (const ParamCheck& p : report.params)
      if (model.is_interaction_param(p.name) && p.max_abs_analytic == 0.0)
        log << "disconnected: " << p.name << " (gradient exactly zero)\n";
  }
  double tol = 1e-4;
  if (report.pass(tol)) {
    log << "PASS (tolerance " << tol << ")\n";
  } else {
    log << "FAIL (tolerance " << tol << ")\n";
    for (const ParamCheck& p : report.params)
      if (p.max_rel_error >= tol)
        log << "  over tolerance: " << p.name << " rel=" << p.max_rel_error << "\n";
  }
  return report;
}

struct AblateRow {
  std::string variant;
  std::vector<double> scores;
  double min = 0.0, mean = 0.0, stddev = 0.0, max = 0.0;
};

// Trains every variant across the seed set and tabulates the spread.
// Scores come from the test set when one is given, else best dev.
inline std::vector<AblateRow> run_ablate(const JobSpec& job, std::ostream& log = std::cout) {
  static const char* kVariants[] = {"single1", "single2", "vanilla",
                                    "pipeline", "ti",      "gti"};
  std::vector<AblateRow> rows;
  std::ostringstream sink;
  for (const char* v : kVariants) {
    AblateRow row;
    row.variant = v;
    for (std::uint64_t seed : job.ablate_seeds) {
      JobSpec sub = job;
      sub.variant = v;
      sub.seed = seed;
      if (row.variant == "single1") sub.aux_tasks.clear();
      sub.out_dir = job.out_dir + "/" + row.variant + "_seed" + std::to_string(seed);
      TrainRunResult r = run_train(sub, sink);
      double score = r.has_test
                         ? (r.test.span ? r.test.report.f1 : r.test.accuracy)
                         : r.best_score;
      row.scores.push_back(score);
      log << "variant=" << row.variant << " seed=" << seed << " score=" << score << "\n";
    }
    double n = static_cast<double>(row.scores.size());
    row.min = *std::min_element(row.scores.begin(), row.scores.end());
    row.max = *std::max_element(row.scores.begin(), row.scores.end());
    double sum = 0.0;
    for (double s : row.scores) sum += s;
    row.mean = sum / n;
    double sq = 0.0;
    for (double s : row.scores) sq += (s - row.mean) * (s - row.mean);
    row.stddev = n > 1.0 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }

  log << "\nvariant    seeds  min      mean     std      max\n";
  char line[128];
  for (const AblateRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %-6zu %-8.4f %-8.4f %-8.4f %-8.4f\n",
                  r.variant.c_str(), r.scores.size(), r.min, r.mean, r.stddev, r.max);
    log << line;
  }

  nlohmann::json j = nlohmann::json::object();
  for (const AblateRow& r : rows)
    j[r.variant] = {{"scores", r.scores}, {"seeds", job.ablate_seeds},
                    {"min", r.min},       {"mean", r.mean},
                    {"std", r.stddev},    {"max", r.max}};
  std::filesystem::create_directories(job.out_dir);
  std::ofstream(job.out_dir + "/ablation.json") << j.dump(2) << "\n";
  return rows;
}

}  // namespace gti
