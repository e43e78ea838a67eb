// rgbdfuse command-line interface.
#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rgbdfuse/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"RGB-D early-fusion detection pipeline"};
  app.require_subcommand(1);

  rgbdfuse::cli::ProjectOptions project_opts;
  auto* project = app.add_subcommand("project", "Project point clouds into depth maps");
  project->add_option("--calib", project_opts.calib, "calibration JSON")->required();
  project->add_option("--clouds", project_opts.clouds, "directory of .xyz/.xyzb clouds")
      ->required();
  project->add_option("--out", project_opts.out, "output directory")->required();

  rgbdfuse::cli::PackOptions pack_opts;
  auto* pack = app.add_subcommand("pack", "Pack RGB + depth maps into RGB-D PNGs");
  pack->add_option("--rgb", pack_opts.rgb_dir, "directory of RGB PNGs")->required();
  pack->add_option("--depth", pack_opts.depth_dir, "directory of 16-bit depth PNGs")->required();
  pack->add_option("--stats", pack_opts.stats, "depth_stats.json path")->required();
  pack->add_option("--out", pack_opts.out, "output directory")->required();

  rgbdfuse::cli::SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic fixture dataset");
  synth->add_option("--config", synth_opts.config, "scene config JSON")->required();
  synth->add_option("--seed", synth_opts.seed, "base seed")->default_val(0);
  synth->add_option("--n", synth_opts.count, "number of scenes")->required();
  synth->add_option("--out", synth_opts.out, "output dataset root")->required();

  rgbdfuse::cli::SplitOptions split_opts;
  std::vector<int> counts;
  auto* split = app.add_subcommand("split", "Create a deterministic train/val/test split");
  split->add_option("--coco", split_opts.coco, "COCO JSON path")->required();
  split->add_option("--counts", counts, "train,val,test counts")->delimiter(',')->required();
  split->add_option("--seed", split_opts.seed, "shuffle seed")->default_val(0);
  split->add_option("--out", split_opts.out, "output manifest path (default: split.json)");

  rgbdfuse::cli::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train detector variants");
  train->add_option("--data", train_opts.data_root, "dataset root (coco.json, split.json, rgbd/)")
      ->required();
  train->add_option("--config", train_opts.config, "pipeline config JSON");
  train->add_option("--out", train_opts.out, "output directory")->required();
  train->add_option("--variant", train_opts.variant, "rgb | depth | rgbd | all")
      ->default_val("all");
  train->add_option("--runs", train_opts.runs, "repeated runs per variant")->default_val(1);

  rgbdfuse::cli::EvalCommandOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint path")->required();
  eval->add_option("--data", eval_opts.data_root, "dataset root")->required();
  eval->add_option("--split", eval_opts.split, "train | val | test")->default_val("test");
  eval->add_option("--out", eval_opts.out, "optional output directory");

  rgbdfuse::cli::ReportOptions report_opts;
  auto* report = app.add_subcommand("report", "Aggregate runs and emit the comparison report");
  report->add_option("--runs-dir", report_opts.runs_dir, "directory of <variant>/runs.json")
      ->required();
  report->add_option("--out", report_opts.out, "optional output directory");

  rgbdfuse::cli::OverlayOptions overlay_opts;
  auto* overlay = app.add_subcommand("overlay", "Render detections onto an image");
  overlay->add_option("--image", overlay_opts.image, "input PNG")->required();
  overlay->add_option("--detections", overlay_opts.detections, "COCO results JSON")->required();
  overlay->add_option("--out", overlay_opts.out, "output PNG")->required();
  overlay->add_option("--score-min", overlay_opts.score_min, "minimum score to draw")
      ->default_val(0.0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage problems are validation errors
  }

  if (*project) return rgbdfuse::cli::cmd_project(project_opts);
  if (*pack) return rgbdfuse::cli::cmd_pack(pack_opts);
  if (*synth) return rgbdfuse::cli::cmd_synth(synth_opts);
  if (*split) {
    if (counts.size() != 3) {
      std::cerr << "error: --counts expects train,val,test\n";
      return 2;
    }
    split_opts.n_train = counts[0];
    split_opts.n_val = counts[1];
    split_opts.n_test = counts[2];
    return rgbdfuse::cli::cmd_split(split_opts);
  }
  if (*train) return rgbdfuse::cli::cmd_train(train_opts);
  if (*eval) return rgbdfuse::cli::cmd_eval(eval_opts);
  if (*report) return rgbdfuse::cli::cmd_report(report_opts);
  if (*overlay) return rgbdfuse::cli::cmd_overlay(overlay_opts);
  return 2;
}
