// Command-line front end: dataset generation, batch VB and SVIHMM fits,
// model evaluation, and the experiment harness. Errors leave exit code 1 and
// a single machine-readable "error: <message>" line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "svihmm/batch_vb.hpp"
#include "svihmm/eval.hpp"
#include "svihmm/svi.hpp"
#include "svihmm/synthetic.hpp"

using nlohmann::json;
using namespace svihmm;

namespace {

HmmParams named_params(const std::string& name) {
  if (name == "dd") return make_dd_params();
  if (name == "rc") return make_rc_params();
  throw std::invalid_argument("unknown generator '" + name + "' (expected dd or rc)");
}

struct SplitData {
  RowMatrix train;
  RowMatrix test;
};

SplitData load_split(const std::string& path, double test_fraction) {
  const RowMatrix all = read_dataset(path).obs;
  const long T = all.rows();
  const long test_len = static_cast<long>(std::floor(T * test_fraction));
  SplitData out;
  out.train = all.topRows(T - test_len);
  if (test_len > 0) out.test = all.bottomRows(test_len);
  return out;
}

RunSetting setting_from_json(const json& j) {
  RunSetting s;
  s.algorithm = j.value("algorithm", s.algorithm);
  s.L = j.value("L", s.L);
  if (j.contains("half_width")) s.L = 2 * j["half_width"].get<long>() + 1;
  s.M = j.value("M", s.M);
  s.kappa = j.value("kappa", s.kappa);
  s.epsilon = j.value("epsilon", s.epsilon);
  s.grow_step = j.value("grow_u", s.grow_step);
  s.growbuf = j.value("growbuf", s.growbuf);
  s.iters = j.value("iters", s.iters);
  s.batch_max_iters = j.value("batch_max_iters", s.batch_max_iters);
  s.batch_tol = j.value("batch_tol", s.batch_tol);
  s.record_objective = j.value("record_objective", s.record_objective);
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"Stochastic and batch variational inference for Gaussian HMMs"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Sample a synthetic dataset");
  std::string gen_dataset = "dd", gen_out;
  long gen_T = 10000;
  std::uint64_t gen_seed = 1;
  bool gen_states = false;
  gen->add_option("--dataset", gen_dataset, "Generator: dd or rc")->capture_default_str();
  gen->add_option("--T", gen_T, "Sequence length")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Sampling seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output path (.csv for CSV, raw binary otherwise)")->required();
  gen->add_flag("--with-states", gen_states, "Also store the true state sequence");

  // fit-batch
  auto* fb = app.add_subcommand("fit-batch", "Batch coordinate-ascent variational Bayes");
  std::string fb_data, fb_out = "model.ckpt", fb_trace;
  int fb_K = 8, fb_max_iters = 200;
  double fb_tol = 1e-6, fb_val = 0.0;
  std::uint64_t fb_seed = 1;
  fb->add_option("--data", fb_data, "Dataset path")->required();
  fb->add_option("--K", fb_K, "Number of latent states")->capture_default_str();
  fb->add_option("--max-iters", fb_max_iters, "Iteration cap")->capture_default_str();
  fb->add_option("--tol", fb_tol, "Relative ELBO tolerance")->capture_default_str();
  fb->add_option("--seed", fb_seed, "Initialization seed")->capture_default_str();
  fb->add_option("--out", fb_out, "Checkpoint output path")->capture_default_str();
  fb->add_option("--trace", fb_trace, "Optional trace CSV path");
  fb->add_option("--val-fraction", fb_val, "Final fraction excluded from training")
      ->capture_default_str();

  // fit-svi
  auto* fs = app.add_subcommand("fit-svi", "Stochastic variational inference (SVIHMM)");
  std::string fs_data, fs_out = "model.ckpt", fs_trace;
  int fs_K = 8, fs_M = 1, fs_iters = 100, fs_grow_u = 8;
  long fs_L = 0, fs_half = -1;
  double fs_kappa = 0.5, fs_eps = 1e-6, fs_val = 0.1;
  bool fs_no_growbuf = false;
  std::uint64_t fs_seed = 1;
  fs->add_option("--data", fs_data, "Dataset path")->required();
  fs->add_option("--K", fs_K, "Number of latent states")->capture_default_str();
  fs->add_option("--L", fs_L, "Subchain length");
  fs->add_option("--half-width", fs_half, "Subchain half-width h (L = 2h + 1)");
  fs->add_option("--M", fs_M, "Subchains per minibatch")->capture_default_str();
  fs->add_option("--kappa", fs_kappa, "Forgetting rate in [0.5, 1]")->capture_default_str();
  fs->add_option("--iters", fs_iters, "Iteration budget")->capture_default_str();
  fs->add_option("--epsilon", fs_eps, "Buffer-growth tolerance")->capture_default_str();
  fs->add_option("--grow-u", fs_grow_u, "Buffer growth per side and round")->capture_default_str();
  fs->add_flag("--no-growbuf", fs_no_growbuf, "Disable adaptive buffering");
  fs->add_option("--seed", fs_seed, "Seed")->capture_default_str();
  fs->add_option("--out", fs_out, "Checkpoint output path")->capture_default_str();
  fs->add_option("--trace", fs_trace, "Optional trace CSV path");
  fs->add_option("--val-fraction", fs_val,
                 "Final fraction held out for the per-iteration objective (0 disables)")
      ->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint against data");
  std::string ev_model, ev_data, ev_truth;
  double ev_test_fraction = 0.1;
  ev->add_option("--model", ev_model, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Dataset path")->required();
  ev->add_option("--truth", ev_truth, "Generator name (dd or rc) for the transition error");
  ev->add_option("--test-fraction", ev_test_fraction,
                 "Final fraction used for the predictive score")
      ->capture_default_str();

  // bench
  auto* be = app.add_subcommand("bench", "Run an experiment config (JSON)");
  std::string be_config;
  be->add_option("--config", be_config, "JSON experiment config")->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    const HmmParams params = named_params(gen_dataset);
    write_dataset(gen_out, params, gen_T, gen_seed, gen_states, gen_dataset);
    std::cout << "wrote " << gen_out << " (T = " << gen_T << ", p = " << params.dim() << ")\n";
    return 0;
  }

  if (*fb) {
    const SplitData split = load_split(fb_data, fb_val);
    const auto [prior_trans, prior_emission] = default_prior(split.train, fb_K);
    BatchOptions opts;
    opts.max_iters = fb_max_iters;
    opts.rel_tol = fb_tol;
    const FitTrace trace =
        run_batch_vb(split.train, fb_K, prior_trans, prior_emission, fb_seed, opts);
    write_checkpoint(fb_out, trace.final);
    if (!fb_trace.empty()) write_trace_csv(fb_trace, trace);
    std::cout << "iters " << trace.rows.size() << " final_elbo "
              << (trace.rows.empty() ? 0.0 : trace.rows.back().objective) << " checkpoint "
              << fb_out << "\n";
    return 0;
  }

  if (*fs) {
    if (fs_half >= 0) fs_L = 2 * fs_half + 1;
    if (fs_L < 2) throw std::invalid_argument("fit-svi: give --L or --half-width");
    const SplitData split = load_split(fs_data, fs_val);
    const auto [prior_trans, prior_emission] = default_prior(split.train, fs_K);
    SviConfig config;
    config.subchain_len = fs_L;
    config.minibatch = fs_M;
    config.kappa = fs_kappa;
    config.iters = fs_iters;
    config.epsilon = fs_eps;
    config.grow_step = fs_grow_u;
    config.use_growbuf = !fs_no_growbuf;
    config.seed = fs_seed;
    const FitTrace trace =
        run_svihmm(split.train, fs_K, prior_trans, prior_emission, config, split.test);
    write_checkpoint(fs_out, trace.final);
    if (!fs_trace.empty()) write_trace_csv(fs_trace, trace);
    std::cout << "iters " << trace.rows.size() << " checkpoint " << fs_out << "\n";
    return 0;
  }

  if (*ev) {
    const GlobalVariational w = read_checkpoint(ev_model);
    const RowMatrix all = read_dataset(ev_data).obs;
    const long test_len =
        std::max<long>(1, static_cast<long>(std::floor(all.rows() * ev_test_fraction)));
    const double lp = predictive_log_prob(w, all.bottomRows(test_len));
    std::cout << "pred_logprob " << lp << "\n";
    if (!ev_truth.empty()) {
      const double err = transition_error(w, named_params(ev_truth));
      std::cout << "trans_error " << err << "\n";
    }
    return 0;
  }

  if (*be) {
    std::ifstream is(be_config);
    if (!is) throw std::runtime_error("bench: cannot open " + be_config);
    json j = json::parse(is);
    ExperimentConfig config;
    config.name = j.value("name", config.name);
    config.generator = j.value("generator", config.generator);
    config.T = j.value("T", config.T);
    config.data_seed = j.value("data_seed", config.data_seed);
    config.num_states = j.value("K", config.num_states);
    config.test_fraction = j.value("test_fraction", config.test_fraction);
    config.restarts = j.value("restarts", config.restarts);
    config.base_seed = j.value("base_seed", config.base_seed);
    config.out_dir = j.value("out_dir", config.out_dir);
    const long budget = j.value("budget", 0L);
    for (const auto& js : j.at("settings")) {
      RunSetting s = setting_from_json(js);
      if (s.algorithm == "svi" && budget > 0 && !js.contains("M"))
        s.M = static_cast<int>(std::max<long>(1, (budget + s.L / 2) / s.L));
      config.settings.push_back(s);
    }
    const auto results = run_experiment(config);
    std::cout << "wrote " << config.out_dir << "/results.csv (" << results.size() << " rows)\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
