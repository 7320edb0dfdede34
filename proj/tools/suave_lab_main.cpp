// suave_lab: semi-supervised training lab driven by flat key=value configs.
//
//   suave_lab pretrain  --config cfg.txt --outdir runs/a --seed 7
//   suave_lab finetune  --outdir runs/b --set run.checkpoint=runs/a/checkpoints/final.ckpt
//   suave_lab eval      --outdir runs/a
//   suave_lab export-embeddings --outdir runs/a --set export.depth=proj2
//   suave_lab make-data --outdir runs/data --set data.kind=two_moons
//
// Any config key can be overridden with repeated --set section.key=value.

#include <CLI11.hpp>

#include "suave/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised clustering lab"};
  app.require_subcommand(1);

  suave::CliOptions opts;
  std::uint64_t seed_value = 0;

  const std::vector<std::string> names = {"pretrain", "finetune", "eval", "export-embeddings",
                                          "make-data"};
  const std::vector<std::string> descriptions = {
      "semi-supervised pre-training run",
      "continue training from a checkpoint with fresh prototypes",
      "evaluate a checkpoint and write eval_report.txt",
      "write per-sample feature vectors as CSV",
      "generate a dataset and write it as CSV",
  };
  for (std::size_t i = 0; i < names.size(); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descriptions[i]);
    sub->add_option("--config", opts.config_path, "flat key = value config file");
    sub->add_option("--set", opts.overrides, "override one key, e.g. --set optim.base_lr=0.1");
    sub->add_option("--outdir", opts.outdir, "run directory for artifacts");
    CLI::Option* seed = sub->add_option("--seed", seed_value, "run.seed override");
    sub->callback([&opts, seed, &seed_value, name = names[i]]() {
      opts.subcommand = name;
      if (seed->count() > 0) {
        opts.seed = seed_value;
      }
    });
  }

  CLI11_PARSE(app, argc, argv);
  return suave::run_command(opts);
}
