/*
Copyright 2026 The drvk Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// drvk: speech dereverberation toolkit.
//
// Subcommands: gen-testdata, prepare, train, dereverb, evaluate, spectrogram.
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drvk/harness.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
};

drvk::ExperimentConfig load_config(const CommonOpts& opts) {
  drvk::ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = drvk::parse_experiment_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
  if (config_required) c->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--out", opts.out_dir, "override the config output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drvk: speech dereverberation toolkit"};
  app.require_subcommand(1);

  CommonOpts gen_opts, prep_opts, train_opts, eval_opts;
  std::string model_id;
  std::vector<std::string> eval_models;
  std::string model_artifact, in_wav, out_wav, out_csv;

  auto* gen = app.add_subcommand("gen-testdata",
                                 "synthesize a clean pseudo-speech corpus");
  add_common(gen, gen_opts, false);

  auto* prep = app.add_subcommand("prepare",
                                  "generate RIRs, reverberant audio and feature caches");
  add_common(prep, prep_opts, false);

  auto* train = app.add_subcommand("train", "train one model of the roster");
  add_common(train, train_opts, false);
  train->add_option("--model", model_id, "model id, e.g. 'HDDAE_A(3)' or 'IDEA_A(6)'")
      ->required();

  auto* evalc = app.add_subcommand("evaluate", "compute STOI/SDI/LSD tables");
  add_common(evalc, eval_opts, false);
  evalc->add_option("--model", eval_models,
                    "model id (repeatable; default: the full roster)");

  auto* dvb = app.add_subcommand("dereverb", "dereverberate one WAV file");
  dvb->add_option("--model", model_artifact, "checkpoint (.ckpt) or ensemble manifest (idea.json)")
      ->required();
  dvb->add_option("input", in_wav, "input WAV (mono PCM16)")->required();
  dvb->add_option("output", out_wav, "output WAV")->required();

  auto* spg = app.add_subcommand("spectrogram", "emit the LPS matrix of a WAV as CSV");
  spg->add_option("input", in_wav, "input WAV")->required();
  spg->add_option("output", out_csv, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(gen_opts);
      drvk::generate_corpus(cfg);
      std::printf("wrote %d train + %d test utterances under %s / %s\n", cfg.gen_train_count,
                  cfg.gen_test_count, cfg.clean_train_dir.c_str(), cfg.clean_test_dir.c_str());
    } else if (prep->parsed()) {
      const auto cfg = load_config(prep_opts);
      const auto manifest = drvk::prepare_dataset(cfg);
      std::printf("prepared %zu train + %zu test utterances (content hash %s)\n",
                  manifest.count("train"), manifest.count("test"),
                  manifest.content_hash.c_str());
    } else if (train->parsed()) {
      const auto cfg = load_config(train_opts);
      const std::string artifact = drvk::train_model(cfg, model_id);
      std::printf("trained %s -> %s\n", model_id.c_str(), artifact.c_str());
    } else if (evalc->parsed()) {
      const auto cfg = load_config(eval_opts);
      drvk::evaluate(cfg, eval_models);
      std::printf("wrote %s/eval/{per_utterance.csv,summary.csv,table.txt}\n",
                  cfg.out_dir.c_str());
    } else if (dvb->parsed()) {
      const size_t clipped = drvk::dereverb_file(model_artifact, in_wav, out_wav);
      if (clipped > 0)
        std::fprintf(stderr, "warning: %zu output samples clipped to [-1, 1]\n", clipped);
      std::printf("wrote %s\n", out_wav.c_str());
    } else if (spg->parsed()) {
      drvk::spectrogram_csv(in_wav, out_csv);
      std::printf("wrote %s\n", out_csv.c_str());
    }
  } catch (const drvk::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const drvk::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const drvk::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
