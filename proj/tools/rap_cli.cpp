// rap: command-line front end for data generation, grounding, training,
// planning, evaluation and experiment sweeps.

#include "rap/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace rap;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
};

ExperimentConfig load_config(const Globals& g, const std::string& preset = "") {
  ExperimentConfig c;
  if (!g.config_path.empty()) {
    c = config_from_json(read_json(g.config_path));
  } else {
    c = ExperimentConfig::preset_named(preset.empty() ? "crosstask-like" : preset);
  }
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw Error("missing argument", std::string("--out ") + what + " is required");
  return g.out;
}

fs::path sibling(const std::string& explicit_path, const fs::path& next_to, const char* name) {
  if (!explicit_path.empty()) return explicit_path;
  return next_to.parent_path() / name;
}

void print_error(const std::string& kind, const std::string& detail) {
  std::cerr << Json{{"error", kind}, {"detail", detail}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented procedure planner"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Experiment seed");
  app.add_option("--config", g.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory or file");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic world and datasets");
  std::string preset;
  gen->add_option("--preset", preset, "crosstask-like or coin-like");

  // ground
  auto* ground = app.add_subcommand("ground", "Ground unannotated videos into pseudo-annotations");
  std::string videos_path, plans_path, vocab_path;
  std::optional<double> perc;
  double fraction = 100.0;
  ground->add_option("--videos", videos_path)->required()->check(CLI::ExistingFile);
  ground->add_option("--plans", plans_path)->required()->check(CLI::ExistingFile);
  ground->add_option("--vocab", vocab_path, "Defaults to vocab.json next to the videos");
  ground->add_option("--perc", perc, "Drop-cost percentile");
  ground->add_option("--fraction", fraction, "Percent of each task's videos to ground");

  // train
  auto* train = app.add_subcommand("train", "Train stage 1 (base planner) or stage 2 (retrieval)");
  int stage = 1;
  std::string data_path, pseudo_path, init_path, tasks_path;
  train->add_option("--stage", stage)->check(CLI::IsMember({1, 2}));
  train->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  train->add_option("--pseudo", pseudo_path)->check(CLI::ExistingFile);
  train->add_option("--init", init_path, "Stage-1 checkpoint (stage 2)");
  train->add_option("--vocab", vocab_path, "Defaults to vocab.json next to the data");
  train->add_option("--tasks", tasks_path, "Defaults to tasks.json next to the data");

  // plan / eval
  auto* plan = app.add_subcommand("plan", "Decode plans for a dataset");
  std::string ckpt_path;
  plan->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  plan->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path)->required()->check(CLI::ExistingFile);

  // report
  auto* report = app.add_subcommand("report", "Render a report as a table or CSV");
  std::string in_path, format = "table";
  report->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  report->add_option("--format", format)->check(CLI::IsMember({"table", "csv"}));

  // sweep / compare
  auto* sweep_cmd = app.add_subcommand("sweep", "Run one pipeline per value of an ablation axis");
  std::string axis;
  std::vector<std::string> values;
  sweep_cmd->add_option("--axis", axis, "layers_heads | memory_size | lambda | pseudo_fraction")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  auto* compare = app.add_subcommand("compare", "Run the pipeline and compare BP with RAP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) {
      const auto config = load_config(g, preset);
      const fs::path out = require_out(g, "DIR");
      write_data(generate_data(config), out);
      write_json(out / "config.json", to_json(config));
      std::cout << "wrote dataset to " << out.string() << "\n";
    } else if (*ground) {
      const auto vocab = vocabulary_from_json(read_json(sibling(vocab_path, videos_path, "vocab.json")));
      GroundingConfig gc = load_config(g).grounding;
      if (perc) gc.perc = *perc;
      const auto videos = read_videos(videos_path, vocab);
      const auto plans = read_plans(plans_path, vocab);
      const auto pseudo = ground_videos(videos, plans, vocab, gc, fraction, 1000000);
      write_samples(require_out(g, "FILE"), pseudo, vocab);
      std::cout << "grounded " << pseudo.size() << " of " << videos.size() << " videos\n";
    } else if (*train) {
      const fs::path out = require_out(g, "FILE");
      if (stage == 1) {
        const auto config = load_config(g);
        const auto vocab = vocabulary_from_json(read_json(sibling(vocab_path, data_path, "vocab.json")));
        const Json tasks = read_json(sibling(tasks_path, data_path, "tasks.json"));
        Matrix task_embeddings(vocab.dim(), static_cast<Eigen::Index>(tasks.at("tasks").size()));
        for (const auto& t : tasks.at("tasks")) {
          task_embeddings.col(t.at("task_id").get<int>()) = vector_from_json(t.at("embedding"));
        }
        const auto train_set = read_samples(data_path, vocab);
        const auto pseudo = pseudo_path.empty() ? std::vector<Sample>{} : read_samples(pseudo_path, vocab);
        const auto r = train_stage1(config, vocab, task_embeddings, train_set, pseudo);
        nn::save_checkpoint(to_checkpoint(r.bundle, config), out);
        std::cout << "stage 1: best epoch " << r.fit.best_epoch << ", validation loss " << r.fit.best_validation_loss
                  << "\n";
      } else {
        if (init_path.empty()) throw Error("missing checkpoint", "stage 2 needs --init with a stage-1 checkpoint");
        const auto ckpt = nn::load_checkpoint(init_path);
        const auto init = bundle_from_checkpoint(ckpt);
        auto config = g.config_path.empty() ? config_from_checkpoint(ckpt) : load_config(g);
        if (g.seed) config.seed = *g.seed;
        const auto train_set = read_samples(data_path, init.vocab);
        const auto pseudo = pseudo_path.empty() ? std::vector<Sample>{} : read_samples(pseudo_path, init.vocab);
        const auto r = train_stage2(config, init, train_set, pseudo);
        nn::save_checkpoint(to_checkpoint(r.bundle, config), out);
        std::cout << "stage 2: best epoch " << r.fit.best_epoch << ", validation loss " << r.fit.best_validation_loss
                  << "\n";
      }
    } else if (*plan) {
      const auto bundle = bundle_from_checkpoint(nn::load_checkpoint(ckpt_path));
      const auto samples = read_samples(data_path, bundle.vocab);
      std::vector<Json> rows;
      for (const auto& s : samples) {
        const auto r = bundle.decode(s.observation);
        Json row = to_json(r.plan, bundle.vocab);
        row["source_id"] = s.source_id;
        row["degenerate"] = r.degenerate;
        row["truncated"] = r.truncated;
        rows.push_back(row);
      }
      if (g.out.empty()) {
        for (const auto& r : rows) std::cout << r.dump() << "\n";
      } else {
        write_jsonl(g.out, rows);
      }
    } else if (*eval) {
      const auto bundle = bundle_from_checkpoint(nn::load_checkpoint(ckpt_path));
      const auto samples = read_samples(data_path, bundle.vocab);
      Json r = to_json(evaluate(bundle, samples));
      r["label"] = bundle.stage == 2 ? "RAP" : "BP";
      if (g.out.empty()) {
        std::cout << r.dump(2) << "\n";
      } else {
        write_json(g.out, r);
      }
    } else if (*report) {
      const Json r = read_json(in_path);
      std::cout << (format == "csv" ? render_csv(r) : render_table(r));
    } else if (*sweep_cmd) {
      const auto config = load_config(g);
      const fs::path out = require_out(g, "DIR");
      const Json table = sweep(config, parse_sweep_axis(axis), values, out);
      write_json(out / "sweep.json", table);
      std::cout << render_table(table);
    } else if (*compare) {
      const auto config = load_config(g);
      const fs::path out = require_out(g, "DIR");
      const Json table = compare_bp_rap(config, out);
      write_json(out / "compare.json", table);
      std::cout << render_table(table);
    }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
