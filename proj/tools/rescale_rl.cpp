#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rescale_rl/rescale_rl.hpp"

namespace fs = std::filesystem;
using namespace rescale;

namespace {

struct RunOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config, "experiment config file (key=value lines)");
  cmd->add_option("-s,--set", o.sets, "override a config key, e.g. --set train.frames=10000");
  cmd->add_option("-o,--out", o.out, "output directory (overrides output.dir)");
}

ExperimentConfig load(const RunOptions& o, std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = std::move(extra);
  overrides.insert(overrides.end(), o.sets.begin(), o.sets.end());
  if (!o.out.empty()) overrides.push_back("output.dir=" + o.out);
  return o.config.empty() ? parse_config("", overrides) : load_config(o.config, overrides);
}

fs::path output_dir(const ExperimentConfig& cfg) {
  return cfg.output_dir.empty() ? fs::path("runs") / cfg.resolved_label() : fs::path(cfg.output_dir);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_and_emit(const ExperimentConfig& cfg) {
  const auto log = run_experiment(cfg);
  const fs::path dir = output_dir(cfg);
  emit_outputs(log, dir);
  std::cout << summary_text(log) << "output=" << dir.string() << "\n";
  return 0;
}

std::vector<double> parse_scales(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    double v;
    if (!detail::parse_double(part, v) || !(v > 0.0)) throw std::invalid_argument("bad scale '" + part + "'");
    out.push_back(v);
  }
  return out;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rescale_rl: reward scaling, network scaling and adaptive scale search for actor-critic agents"};
  app.require_subcommand(1);

  RunOptions train_o, ans_o, popart_o, sweep_o;
  auto* train = app.add_subcommand("train", "run one experiment config");
  add_run_options(train, train_o);

  auto* sweep = app.add_subcommand("sweep", "run a fixed-scale sweep");
  add_run_options(sweep, sweep_o);
  std::string scales = "0.5,1,10,100";
  sweep->add_option("--scales", scales, "comma-separated reward scales")->capture_default_str();

  auto* ans = app.add_subcommand("ans", "run with the adaptive scale search");
  add_run_options(ans, ans_o);

  auto* popart = app.add_subcommand("popart", "run with Pop-Art target normalisation");
  add_run_options(popart, popart_o);

  auto* pdrr = app.add_subcommand("pdrr", "pseudo-dying ratios of a network on a sample window");
  std::string pdrr_net, pdrr_window;
  pdrr->add_option("--net", pdrr_net, "network file, or a checkpoint directory")->required();
  pdrr->add_option("--window", pdrr_window, "CSV of input rows (defaults to window.csv in a checkpoint)");

  auto* scale_net = app.add_subcommand("scale-net", "multiply a ReLU network's output by c");
  std::string sn_in, sn_out;
  double sn_factor = 1.0;
  scale_net->add_option("--in", sn_in, "input network file")->required();
  scale_net->add_option("--out", sn_out, "output network file")->required();
  scale_net->add_option("-c,--factor", sn_factor, "output multiplier c > 0")->required();

  auto* prop1 = app.add_subcommand("prop1", "revival-probability bounds against Monte-Carlo estimates");
  std::uint64_t p_samples = 1000000, p_seed = 0;
  std::size_t p_scenarios = 5;
  unsigned p_threads = 1;
  prop1->add_option("-n,--samples", p_samples, "Monte-Carlo samples per scenario")->capture_default_str();
  prop1->add_option("--scenarios", p_scenarios, "random scenarios per case")->capture_default_str();
  prop1->add_option("--seed", p_seed, "random seed")->capture_default_str();
  prop1->add_option("--threads", p_threads, "sampling threads")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "recompute final scores from episodes.csv files");
  std::vector<std::string> eval_files;
  std::size_t eval_window = 100;
  eval->add_option("files", eval_files, "episodes.csv files or run directories")->required();
  eval->add_option("--window", eval_window, "trailing episodes per trial")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*train) return run_and_emit(load(train_o));
    if (*ans) return run_and_emit(load(ans_o, {"scale.mode=ans"}));
    if (*popart) return run_and_emit(load(popart_o, {"scale.mode=popart"}));
    if (*sweep) {
      const auto cfg = load(sweep_o);
      const auto results = run_sweep(cfg, parse_scales(scales));
      const fs::path dir = cfg.output_dir.empty() ? fs::path("runs") / "sweep" : fs::path(cfg.output_dir);
      emit_sweep(results, dir);
      std::cout << read_file((dir / "sweep_summary.csv").string()) << "output=" << dir.string() << "\n";
      return 0;
    }
    if (*pdrr) {
      fs::path net_path = pdrr_net, window_path = pdrr_window;
      if (fs::is_directory(net_path)) {
        if (window_path.empty()) window_path = net_path / "window.csv";
        net_path /= "critic.net";
      }
      if (window_path.empty()) throw std::invalid_argument("--window is required unless --net is a checkpoint directory");
      const Network net = network_from_string(read_file(net_path.string()));
      const Matrix window = read_matrix_csv(window_path.string());
      const auto report = pdrr_report(net, window);
      std::cout << "layer,neurons,pseudo_dying,pdrr\n";
      for (const auto& l : report.layers)
        std::cout << l.layer << "," << l.n_neurons << "," << l.n_pseudo_dying << "," << fmt_double(l.ratio) << "\n";
      std::cout << "window=" << report.window_size << "\n";
      return 0;
    }
    if (*scale_net) {
      const Network net = network_from_string(read_file(sn_in));
      const Network scaled = scale_network(net, sn_factor);
      detail::write_text_file(sn_out, network_to_string(scaled));
      std::cout << "scaled " << sn_in << " by " << fmt_double(sn_factor) << " -> " << sn_out << "\n";
      return 0;
    }
    if (*prop1) {
      std::mt19937_64 rng(p_seed);
      std::cout << "case,B,bias,w_norm,cos_min,mean,std,bound,empirical,ci_half_width,rejection_rate\n";
      auto row = [&](const Prop1Scenario& sc, std::uint64_t seed) {
        const auto est = prop1_monte_carlo(sc, p_samples, seed, p_threads);
        std::printf("%s,%zu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6f,%.6f,%.6f,%.3g\n", to_string(sc.kind).c_str(), sc.batch,
                    sc.bias, sc.w_norm, sc.cos_min, sc.mean_norm, sc.std_norm, sc.bound(), est.probability,
                    est.ci_half_width, est.rejection_rate());
      };
      row(extremal_case1_scenario(16, 1.0, 0.05), p_seed);
      for (std::size_t i = 0; i < p_scenarios; ++i) row(random_prop1_scenario(Prop1Case::Case1, rng), p_seed + i + 1);
      for (std::size_t i = 0; i < p_scenarios; ++i)
        row(random_prop1_scenario(Prop1Case::Case2, rng), p_seed + p_scenarios + i + 1);
      return 0;
    }
    if (*eval) {
      std::cout << "file,trials,evaluate_final\n";
      for (const auto& f : eval_files) {
        fs::path p = f;
        if (fs::is_directory(p)) p /= "episodes.csv";
        const auto trials = parse_episodes_csv(read_file(p.string()));
        std::cout << p.string() << "," << trials.size() << "," << fmt_double(evaluate_final(trials, eval_window)) << "\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
