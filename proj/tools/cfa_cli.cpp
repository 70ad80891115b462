// Command-line front end: synthetic data, bank modeling, adaptation,
// scoring and evaluation over exported feature files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cfa/checkpoint.hpp"
#include "cfa/error.hpp"
#include "cfa/eval.hpp"
#include "cfa/feature_io.hpp"
#include "cfa/grid_source.hpp"
#include "cfa/memory_bank.hpp"
#include "cfa/parallel.hpp"
#include "cfa/scoring.hpp"
#include "cfa/synthetic.hpp"
#include "cfa/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_init_desc(const std::string& bank) { return bank + ".init_desc"; }

std::size_t first_train_dim(const cfa::DatasetManifest& manifest) {
  const auto train = manifest.split(cfa::Split::kTrain);
  if (train.empty()) throw cfa::ConfigError("manifest has no train entries");
  const auto info = cfa::probe_container(train.front().feature_path, cfa::kFeatureMagic);
  std::size_t d = 0;
  for (const auto& s : info.shapes) d += s[0];
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled-hypersphere feature adaptation for anomaly localization"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic feature dataset");
  std::string spec_path, gen_out;
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out-dir", gen_out, "Output directory")->required();

  // build-bank
  auto* bb = app.add_subcommand("build-bank", "Build the compressed memory bank from the train split");
  std::string bb_manifest, bb_out, bb_desc_out;
  cfa::BankConfig bank_cfg;
  bb->add_option("--manifest", bb_manifest)->required()->check(CLI::ExistingFile);
  bb->add_option("--gamma-c", bank_cfg.gamma_c, "Bank size relative to patch count")->capture_default_str();
  bb->add_option("--gamma-d", bank_cfg.gamma_d, "Descriptor output dim relative to D")->capture_default_str();
  bb->add_option("--beta", bank_cfg.ema_beta, "EMA weight of matched features")->capture_default_str();
  bb->add_option("--kmeans-iters", bank_cfg.kmeans_iters)->capture_default_str();
  bb->add_option("--seed", bank_cfg.seed)->capture_default_str();
  bb->add_option("--out", bb_out, "Bank checkpoint")->required();
  bb->add_option("--desc-out", bb_desc_out, "Initial descriptor (default: <out>.init_desc)");

  // train
  auto* tr = app.add_subcommand("train", "Adapt the patch descriptor against a frozen bank");
  std::string tr_manifest, tr_bank, tr_init, tr_out, tr_log;
  cfa::CfaHyperParams hp;
  cfa::AdamWConfig opt;
  std::uint64_t tr_seed = 0;
  std::string rep_mode = "non-degenerate";
  tr->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  tr->add_option("--bank", tr_bank)->required()->check(CLI::ExistingFile);
  tr->add_option("--init-desc", tr_init, "Initial descriptor (default: <bank>.init_desc)");
  tr->add_option("--epochs", hp.epochs)->capture_default_str();
  tr->add_option("--batch", hp.batch_size)->capture_default_str();
  tr->add_option("--lr", opt.lr)->capture_default_str();
  tr->add_option("--weight-decay", opt.weight_decay)->capture_default_str();
  tr->add_option("--radius", hp.radius)->capture_default_str();
  tr->add_option("--alpha", hp.alpha)->capture_default_str();
  tr->add_option("--k", hp.k)->capture_default_str();
  tr->add_option("--j", hp.j)->capture_default_str();
  tr->add_option("--rep-mode", rep_mode)->check(CLI::IsMember({"as-written", "non-degenerate"}))->capture_default_str();
  tr->add_option("--seed", tr_seed)->capture_default_str();
  tr->add_option("--out", tr_out, "Trained descriptor checkpoint")->required();
  tr->add_option("--log", tr_log, "Per-epoch loss CSV");

  // score
  auto* sc = app.add_subcommand("score", "Write anomaly score maps for the test split");
  std::string sc_manifest, sc_bank, sc_desc, sc_out;
  std::size_t sc_k = 3;
  double sc_sigma = cfa::kDefaultSmoothingSigma;
  sc->add_option("--manifest", sc_manifest)->required()->check(CLI::ExistingFile);
  sc->add_option("--bank", sc_bank)->required()->check(CLI::ExistingFile);
  sc->add_option("--desc", sc_desc)->required()->check(CLI::ExistingFile);
  sc->add_option("--out-dir", sc_out)->required();
  sc->add_option("--k", sc_k)->capture_default_str();
  sc->add_option("--sigma", sc_sigma)->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Compute I-AUROC, P-AUROC and the F1 threshold");
  std::string ev_manifest, ev_bank, ev_desc, ev_report, ev_roc;
  std::size_t ev_k = 3;
  double ev_sigma = cfa::kDefaultSmoothingSigma;
  ev->add_option("--manifest", ev_manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--bank", ev_bank)->required()->check(CLI::ExistingFile);
  ev->add_option("--desc", ev_desc)->required()->check(CLI::ExistingFile);
  ev->add_option("--report", ev_report)->required();
  ev->add_option("--k", ev_k)->capture_default_str();
  ev->add_option("--sigma", ev_sigma)->capture_default_str();
  ev->add_option("--roc-csv", ev_roc, "Prefix for <prefix>_image.csv and <prefix>_pixel.csv");

  CLI11_PARSE(app, argc, argv);
  cfa::set_thread_count(threads);

  try {
    if (gen->parsed()) {
      const auto spec = cfa::load_synthetic_spec(spec_path);
      const auto manifest = cfa::generate(spec, gen_out);
      std::cout << "wrote " << manifest.string() << '\n';
    } else if (bb->parsed()) {
      const auto manifest = cfa::load_manifest(bb_manifest);
      bank_cfg.validate();
      const std::size_t d = first_train_dim(manifest);
      const auto desc = cfa::init_descriptor(d, cfa::reduced_dim(d, bank_cfg.gamma_d), bank_cfg.seed);
      const auto bank = cfa::build_bank(manifest, desc, bank_cfg);
      cfa::save_bank(bank, bb_out);
      cfa::save_descriptor(desc, cfa::OptimizerState::for_descriptor(desc),
                           bb_desc_out.empty() ? default_init_desc(bb_out) : bb_desc_out);
      std::cout << "bank M=" << bank.size() << " D'=" << bank.dim() << '\n';
    } else if (tr->parsed()) {
      hp.rep_mode = rep_mode == "as-written" ? cfa::RepMarginMode::kAsWritten : cfa::RepMarginMode::kNonDegenerate;
      const auto manifest = cfa::load_manifest(tr_manifest);
      const auto bank = cfa::load_bank(tr_bank);
      auto init = cfa::load_descriptor(tr_init.empty() ? default_init_desc(tr_bank) : tr_init);
      const auto result = cfa::train(manifest, std::move(init.descriptor), bank, hp, opt, tr_seed);
      cfa::save_descriptor(result.descriptor, result.state, tr_out);
      if (!tr_log.empty()) cfa::write_loss_log(result.log, tr_log);
      if (!result.log.empty()) {
        const auto& last = result.log.back().losses;
        std::printf("final epoch: l_att=%.6g l_rep=%.6g l_total=%.6g\n", last.l_att, last.l_rep, last.l_total);
      }
    } else if (sc->parsed()) {
      const auto manifest = cfa::load_manifest(sc_manifest);
      const auto bank = cfa::load_bank(sc_bank);
      const auto desc = cfa::load_descriptor(sc_desc).descriptor;
      fs::create_directories(sc_out);
      std::ofstream csv(fs::path(sc_out) / "image_scores.csv");
      if (!csv) throw cfa::IoError("cannot write image_scores.csv");
      csv << "sample_id,image_label,image_score\n";
      for (const auto& e : manifest.split(cfa::Split::kTest)) {
        const auto map = cfa::score_sample(cfa::load_grid(e), desc, bank, sc_k, manifest.input_height,
                                           manifest.input_width, sc_sigma);
        cfa::save_score_map(map, e.sample_id, fs::path(sc_out) / (e.sample_id + ".score"));
        cfa::write_pgm(cfa::to_gray(map.normalized), fs::path(sc_out) / (e.sample_id + ".pgm"));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", map.image_score);
        csv << e.sample_id << ',' << (e.label == cfa::ImageLabel::kAnomalous ? "anomalous" : "normal") << ','
            << buf << '\n';
      }
    } else if (ev->parsed()) {
      const auto manifest = cfa::load_manifest(ev_manifest);
      const auto bank = cfa::load_bank(ev_bank);
      const auto desc = cfa::load_descriptor(ev_desc).descriptor;
      const auto result = cfa::evaluate_class(manifest, bank, desc, ev_k, !ev_roc.empty(), ev_sigma);
      cfa::write_report(result.report, ev_report);
      if (!ev_roc.empty()) {
        cfa::write_roc_csv(result.image_roc, ev_roc + "_image.csv");
        cfa::write_roc_csv(result.pixel_roc, ev_roc + "_pixel.csv");
      }
      std::printf("I-AUROC %.2f  P-AUROC %.2f  F1 %.4f @ %.6g\n", result.report.i_auroc, result.report.p_auroc,
                  result.report.f1, result.report.f1_threshold);
    }
  } catch (const cfa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
