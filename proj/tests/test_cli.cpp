#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "json.hpp"

#include "gti/data.hpp"
#include "gti/eval.hpp"
#include "support/synth.hpp"

#ifndef GTI_CLI_BINARY
#error "GTI_CLI_BINARY must point at the built executable"
#endif

using namespace gti;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunResult run_cli(const std::string& args, const std::string& dir,
                  const std::string& env = "") {
  std::string out_path = dir + "/stdout.txt";
  std::string err_path = dir + "/stderr.txt";
  std::string cmd = env + (env.empty() ? "" : " ") + GTI_CLI_BINARY + " " + args +
                    " > " + out_path + " 2> " + err_path;
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

// Small dimensions keep each training run to a few seconds.
std::string model_flags() {
  return "--state-size 6 --word-dim 8 --char-dim 5 --char-filters 3 "
         "--label-dim 4 --val-count 6 --batch-size 5 --seed 7";
}

std::vector<std::vector<std::string>> nonblank_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<std::string> row;
    std::string f;
    while (fields >> f) row.push_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

// One shared workspace: later sections reuse the checkpoints trained here.
struct Workspace {
  std::string dir = synth::temp_dir("cli");
  std::string train_file = dir + "/train.txt";
  std::string tokens_file = dir + "/tokens.txt";
  std::string gti_dir = dir + "/gti_run";
  std::string gti_ckpt = gti_dir + "/best.ckpt";

  Workspace() {
    synth::write_conll(train_file, synth::corpus(), true);
    std::ofstream tokens(tokens_file);
    for (const auto& s : synth::raw_corpus()) {
      for (const std::string& t : s.tokens) tokens << t << "\n";
      tokens << "\n";
    }
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

void ensure_gti_model() {
  static bool trained = false;
  if (trained) return;
  RunResult r = run_cli("train --train " + ws().train_file +
                            " --main ner --aux pos,chunk --variant gti --epochs 3 " +
                            model_flags() + " --test " + ws().train_file +
                            " --out-dir " + ws().gti_dir,
                        ws().dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  trained = true;
}

}  // namespace

TEST_CASE("train writes a checkpoint, a manifest, and an epoch log") {
  ensure_gti_model();

  REQUIRE(std::ifstream(ws().gti_ckpt).good());

  nlohmann::json manifest = nlohmann::json::parse(slurp(ws().gti_dir + "/run.json"));
  REQUIRE(manifest["command"] == "train");
  REQUIRE(manifest["variant"] == "gti");
  REQUIRE(manifest["main_task"] == "ner");
  REQUIRE(manifest["aux_tasks"] == nlohmann::json::array({"pos", "chunk"}));
  REQUIRE(manifest["epochs_run"] == 3);
  REQUIRE(manifest["parameter_count"].get<std::size_t>() > 0);
  REQUIRE(manifest["best_dev_score"].get<double>() >= 0.0);
  REQUIRE(manifest["files"].contains("train"));
  REQUIRE(manifest["files"]["train"]["fnv1a64"].get<std::string>().size() == 16);

  std::istringstream log(slurp(ws().gti_dir + "/train_log.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(log, line)) {
    nlohmann::json rec = nlohmann::json::parse(line);
    REQUIRE(rec["epoch"] == n);
    REQUIRE(rec["lr"].get<double>() > 0.0);
    REQUIRE(std::isfinite(rec["train_loss"].get<double>()));
    REQUIRE(rec["dev_score"].get<double>() >= 0.0);
    REQUIRE(rec.contains("best"));
    ++n;
  }
  REQUIRE(n == 3);

  // --test wrote a span report next to the checkpoint.
  std::istringstream test_in(slurp(ws().gti_dir + "/test_report.txt"));
  EvalReport test_report = parse_report(test_in);
  REQUIRE(test_report.gold > 0);
}

TEST_CASE("eval scores a checkpoint and can persist the report") {
  ensure_gti_model();
  std::string report_path = ws().dir + "/eval_report.txt";
  RunResult r = run_cli("eval --checkpoint " + ws().gti_ckpt + " --data " +
                            ws().train_file + " --report " + report_path,
                        ws().dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("F1=") != std::string::npos);
  std::istringstream rep_in(slurp(report_path));
  EvalReport rep = parse_report(rep_in);
  REQUIRE(rep.gold > 0);
  REQUIRE(rep.f1 >= 0.0);
  REQUIRE(rep.f1 <= 1.0);

  // The explicit format flag agrees with the inferred layout.
  std::string forced_path = ws().dir + "/eval_forced.txt";
  RunResult forced = run_cli("eval --checkpoint " + ws().gti_ckpt + " --data " +
                                 ws().train_file + " --data-format conll2003" +
                                 " --report " + forced_path,
                             ws().dir);
  REQUIRE(forced.code == 0);
  REQUIRE(slurp(forced_path) == slurp(report_path));

  // A three-column layout cannot host a model whose main task is ner.
  RunResult wrong = run_cli("eval --checkpoint " + ws().gti_ckpt + " --data " +
                                ws().train_file + " --data-format conll2000",
                            ws().dir);
  REQUIRE(wrong.code == 2);
}

TEST_CASE("predict echoes tokens and appends every task column") {
  ensure_gti_model();
  std::string out1 = ws().dir + "/pred1.txt";
  RunResult r = run_cli("predict --checkpoint " + ws().gti_ckpt + " --input " +
                            ws().tokens_file + " --output " + out1,
                        ws().dir);
  INFO(r.err);
  REQUIRE(r.code == 0);

  auto corpus = synth::raw_corpus();
  auto rows = nonblank_rows(slurp(out1));
  std::size_t total_tokens = 0;
  for (const auto& s : corpus) total_tokens += s.tokens.size();
  REQUIRE(rows.size() == total_tokens);
  std::size_t at = 0;
  for (const auto& s : corpus)
    for (const std::string& tok : s.tokens) {
      REQUIRE(rows[at].size() == 4);  // token, pos, chunk, ner
      REQUIRE(rows[at][0] == tok);
      ++at;
    }

  // Byte-identical on repeat and under worker fan-out.
  std::string out2 = ws().dir + "/pred2.txt";
  std::string out3 = ws().dir + "/pred3.txt";
  REQUIRE(run_cli("predict --checkpoint " + ws().gti_ckpt + " --input " +
                      ws().tokens_file + " --output " + out2,
                  ws().dir)
              .code == 0);
  REQUIRE(run_cli("predict --checkpoint " + ws().gti_ckpt + " --input " +
                      ws().tokens_file + " --output " + out3,
                  ws().dir, "GTI_THREADS=4")
              .code == 0);
  REQUIRE(slurp(out2) == slurp(out1));
  REQUIRE(slurp(out3) == slurp(out1));
}

TEST_CASE("single-task predictions carry only the main column") {
  std::string out_dir = ws().dir + "/single1_run";
  RunResult train = run_cli("train --train " + ws().train_file +
                                " --main ner --variant single1 --epochs 2 " +
                                model_flags() + " --out-dir " + out_dir,
                            ws().dir);
  INFO(train.err);
  REQUIRE(train.code == 0);

  std::string out = ws().dir + "/pred_single1.txt";
  RunResult r = run_cli("predict --checkpoint " + out_dir + "/best.ckpt --input " +
                            ws().tokens_file + " --output " + out,
                        ws().dir);
  REQUIRE(r.code == 0);
  for (const auto& row : nonblank_rows(slurp(out))) REQUIRE(row.size() == 2);
}

TEST_CASE("gold-featured predictions need the aux columns in the input") {
  std::string out_dir = ws().dir + "/single2_run";
  RunResult train = run_cli("train --train " + ws().train_file +
                                " --main ner --aux pos,chunk --variant single2" +
                                " --epochs 2 " + model_flags() + " --out-dir " + out_dir,
                            ws().dir);
  INFO(train.err);
  REQUIRE(train.code == 0);

  // token + gold pos + gold chunk per line.
  std::string featured = ws().dir + "/featured.txt";
  {
    auto corpus = synth::raw_corpus();
    std::ofstream f(featured);
    for (const auto& s : corpus) {
      for (std::size_t i = 0; i < s.tokens.size(); ++i)
        f << s.tokens[i] << ' ' << s.columns[0][i] << ' ' << s.columns[1][i] << "\n";
      f << "\n";
    }
  }

  std::string out = ws().dir + "/pred_single2.txt";
  RunResult r = run_cli("predict --checkpoint " + out_dir + "/best.ckpt --input " +
                            featured + " --output " + out,
                        ws().dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const auto& row : nonblank_rows(slurp(out)))
    REQUIRE(row.size() == 4);  // echoed token + 2 gold columns, then the tag

  // Token-only input lacks the gold features: a data problem, not a crash.
  RunResult bare = run_cli("predict --checkpoint " + out_dir + "/best.ckpt --input " +
                               ws().tokens_file + " --output /dev/null",
                           ws().dir);
  REQUIRE(bare.code == 2);
}

TEST_CASE("gradcheck runs green from the command line") {
  RunResult r = run_cli("gradcheck --variant single1 --seed 3", ws().dir);
  INFO(r.out);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("a one-seed ablation sweep tabulates all six variants") {
  std::string out_dir = ws().dir + "/ablate_run";
  RunResult r = run_cli("ablate --train " + ws().train_file +
                            " --main ner --aux pos,chunk --seeds 4 --epochs 1 " +
                            model_flags() + " --out-dir " + out_dir,
                        ws().dir);
  INFO(r.err);
  REQUIRE(r.code == 0);

  nlohmann::json table = nlohmann::json::parse(slurp(out_dir + "/ablation.json"));
  for (const char* v : {"single1", "single2", "vanilla", "pipeline", "ti", "gti"}) {
    REQUIRE(table.contains(v));
    REQUIRE(table[v]["scores"].size() == 1);
    REQUIRE(table[v]["min"] == table[v]["max"]);
    REQUIRE(table[v]["std"] == 0.0);
    REQUIRE(table[v]["mean"] == table[v]["scores"][0]);
  }
  REQUIRE(r.out.find("variant=gti seed=4") != std::string::npos);
}

TEST_CASE("failures map to distinct exit codes") {
  // Usage problems: missing required flag, unknown subcommand.
  REQUIRE(run_cli("train", ws().dir).code == 2);
  REQUIRE(run_cli("frobnicate", ws().dir).code == 2);

  // Missing input data.
  REQUIRE(run_cli("train --train " + ws().dir + "/absent.txt --main ner", ws().dir)
              .code == 2);
  ensure_gti_model();
  REQUIRE(run_cli("eval --checkpoint " + ws().gti_ckpt + " --data " + ws().dir +
                      "/absent.txt",
                  ws().dir)
              .code == 2);
  REQUIRE(run_cli("eval --checkpoint " + ws().dir + "/absent.ckpt --data " +
                      ws().train_file,
                  ws().dir)
              .code == 2);

  // A damaged checkpoint is a configuration failure.
  std::string broken = ws().dir + "/broken.ckpt";
  {
    std::string bytes = slurp(ws().gti_ckpt);
    std::ofstream out(broken, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  RunResult r = run_cli("eval --checkpoint " + broken + " --data " + ws().train_file,
                        ws().dir);
  REQUIRE(r.code == 4);
  REQUIRE(r.err.find("CHECKPOINT_") != std::string::npos);

  // So is gold data whose tags the model never saw.
  std::string unseen = ws().dir + "/unseen.txt";
  {
    auto corpus = synth::corpus();
    corpus[0][0].ner = "B-ZZZ";
    synth::write_conll(unseen, corpus, true);
  }
  RunResult mism = run_cli("eval --checkpoint " + ws().gti_ckpt + " --data " + unseen,
                           ws().dir);
  REQUIRE(mism.code == 4);
  REQUIRE(mism.err.find("CONFIG_MISMATCH") != std::string::npos);
}
