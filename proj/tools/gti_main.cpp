// Command-line front end: train, eval, predict, gradcheck, ablate.
// Exit codes: 0 success, 2 usage or data problems, 3 numerical
// failures, 4 configuration mismatches.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gti/gti.hpp"

namespace {

int exit_code_for(const gti::Error& e) {
  std::string cls = e.error_class();
  if (cls == "NUMERICAL_FAILURE") return 3;
  if (cls == "CONFIG_MISMATCH" || cls.rfind("CHECKPOINT_", 0) == 0) return 4;
  return 2;
}

void add_common_model_flags(CLI::App* cmd, gti::JobSpec& job) {
  cmd->add_option("--data-format", job.data_format, "conll2000 or conll2003");
  cmd->add_option("--main", job.main_task, "main task column (pos|chunk|ner)");
  cmd->add_option("--aux", job.aux_tasks, "aux task columns")->delimiter(',');
  cmd->add_option("--variant", job.variant,
                  "single1|single2|vanilla|pipeline|ti|gti");
  cmd->add_option("--state-size", job.state_size, "recurrent state size per direction");
  cmd->add_option("--word-dim", job.d_word, "word embedding size");
  cmd->add_option("--char-dim", job.d_char, "char embedding size (0: word size)");
  cmd->add_option("--char-filters", job.n_char_filters, "char conv filter count");
  cmd->add_option("--label-dim", job.d_label, "tag embedding size");
  cmd->add_option("--dropout", job.dropout, "dropout rate");
  cmd->add_flag("--iobes-mask", job.use_iobes_mask, "forbid illegal tag transitions");
  cmd->add_flag("--digits", job.normalize_digits, "map digits to 0 before lookup");
  cmd->add_option("--seed", job.seed, "run seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task sequence tagger"};
  app.require_subcommand(1);
  gti::JobSpec job;

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common_model_flags(train, job);
  train->add_option("--train", job.train_path, "training data")->required();
  train->add_option("--dev", job.dev_path, "validation data (else split from train)");
  train->add_option("--test", job.test_path, "test data, scored after training");
  train->add_option("--embeddings", job.embeddings_path, "pretrained word vectors");
  train->add_option("--out-dir", job.out_dir, "output directory");
  train->add_option("--epochs", job.epochs, "epoch cap");
  train->add_option("--batch-size", job.batch_size, "sentences per step");
  train->add_option("--alpha0", job.alpha0, "initial learning rate");
  train->add_option("--val-count", job.val_count, "dev sentences when splitting");
  train->add_flag("--clip", job.clip_gradients, "clip global gradient norm at 5");

  CLI::App* eval = app.add_subcommand("eval", "score a trained model");
  eval->add_option("--checkpoint", job.checkpoint_path, "model file")->required();
  eval->add_option("--data", job.test_path, "gold data to score")->required();
  eval->add_option("--data-format", job.data_format,
                   "column layout (default: from checkpoint tasks)");
  eval->add_option("--report", job.output_path, "also write the report here");

  CLI::App* predict = app.add_subcommand("predict", "tag raw sentences");
  predict->add_option("--checkpoint", job.checkpoint_path, "model file")->required();
  predict->add_option("--input", job.input_path, "one token per line")->required();
  predict->add_option("--output", job.output_path, "output file (default stdout)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");
  gradcheck->add_option("--variant", job.variant,
                        "single1|single2|vanilla|pipeline|ti|gti");
  gradcheck->add_option("--seed", job.seed, "model seed");

  CLI::App* ablate = app.add_subcommand("ablate", "train every variant across seeds");
  add_common_model_flags(ablate, job);
  ablate->add_option("--train", job.train_path, "training data")->required();
  ablate->add_option("--dev", job.dev_path, "validation data (else split from train)");
  ablate->add_option("--test", job.test_path, "test data used for the table");
  ablate->add_option("--embeddings", job.embeddings_path, "pretrained word vectors");
  ablate->add_option("--out-dir", job.out_dir, "output directory");
  ablate->add_option("--epochs", job.epochs, "epoch cap per run");
  ablate->add_option("--batch-size", job.batch_size, "sentences per step");
  ablate->add_option("--alpha0", job.alpha0, "initial learning rate");
  ablate->add_option("--val-count", job.val_count, "dev sentences when splitting");
  ablate->add_option("--seeds", job.ablate_seeds, "seed set")->delimiter(',');

  // eval's format default means "infer from the checkpoint"
  if (argc > 1 && std::string(argv[1]) == "eval") job.data_format.clear();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      gti::run_train(job);
      return 0;
    }
    if (eval->parsed()) {
      gti::run_eval(job);
      return 0;
    }
    if (predict->parsed()) {
      if (job.output_path.empty()) {
        gti::run_predict(job, std::cout);
      } else {
        std::ofstream out(job.output_path, std::ios::trunc);
        if (!out)
          throw gti::DataNotFoundError("cannot write '" + job.output_path + "'");
        gti::run_predict(job, out);
      }
      return 0;
    }
    if (gradcheck->parsed()) {
      gti::GradCheckReport report = gti::run_gradcheck(job.variant, job.seed);
      return report.pass(1e-4) ? 0 : 3;
    }
    if (ablate->parsed()) {
      gti::run_ablate(job);
      return 0;
    }
  } catch (const gti::Error& e) {
    std::cerr << "error: " << e.error_class() << ": " << e.what() << std::endl;
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: INTERNAL: " << e.what() << std::endl;
    return 3;
  }
  return 2;
}
