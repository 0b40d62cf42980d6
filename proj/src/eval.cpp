#include "svihmm/eval.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

#include "svihmm/synthetic.hpp"

namespace svihmm {

namespace {

// O(n^3) Hungarian algorithm (potentials + shortest augmenting paths).
// Returns match[row] = column of the minimum-cost perfect matching.
std::vector<int> hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  return match;
}

}  // namespace

std::vector<int> align_states(const std::vector<Vector>& fitted_means,
                              const std::vector<Vector>& true_means) {
  const int k = static_cast<int>(fitted_means.size());
  if (static_cast<int>(true_means.size()) != k)
    throw std::invalid_argument("align_states: state counts differ");
  Matrix cost(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) cost(i, j) = (fitted_means[i] - true_means[j]).squaredNorm();
  return hungarian(cost);
}

HmmParams plugin_point_params(const GlobalVariational& w) {
  const int k = w.num_states();
  const int p = w.dim();
  HmmParams out;
  out.trans.resize(k, k);
  for (int j = 0; j < k; ++j) out.trans.row(j) = dirichlet_mean(w.trans_rows[j]).transpose();
  out.emissions.resize(k);
  for (int j = 0; j < k; ++j) {
    const NiwParams std_form = niw_from_natural(w.emissions[j]);
    out.emissions[j].mean = std_form.mean;
    out.emissions[j].cov = std_form.scale / (std_form.dof - p - 1);  // posterior mean covariance
  }
  out.init_dist = stationary_distribution(out.trans);
  return out;
}

double transition_error(const GlobalVariational& w, const HmmParams& truth) {
  const int k = w.num_states();
  if (truth.num_states() != k) throw std::invalid_argument("transition_error: state counts differ");
  std::vector<Vector> fitted(k), target(k);
  for (int j = 0; j < k; ++j) {
    fitted[j] = w.emissions[j].u1 / w.emissions[j].u2;
    target[j] = truth.emissions[j].mean;
  }
  const std::vector<int> perm = align_states(fitted, target);
  double sq = 0.0;
  for (int i = 0; i < k; ++i) {
    const Vector row = dirichlet_mean(w.trans_rows[i]);
    for (int j = 0; j < k; ++j) {
      const double d = row[j] - truth.trans(perm[i], perm[j]);
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

double predictive_log_prob(const GlobalVariational& w, const Eigen::Ref<const RowMatrix>& test) {
  const long len = test.rows();
  if (len < 1) throw std::invalid_argument("predictive_log_prob: empty test sequence");
  const HmmParams point = plugin_point_params(w);
  const int k = point.num_states();
  const int p = point.dim();
  constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

  struct StateDensity {
    Matrix chol;
    Vector mean;
    double constant;
  };
  std::vector<StateDensity> dens(k);
  for (int j = 0; j < k; ++j) {
    Eigen::LLT<Matrix> llt(point.emissions[j].cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("predictive_log_prob: point covariance not SPD");
    dens[j].chol = llt.matrixL();
    dens[j].mean = point.emissions[j].mean;
    double log_det = 0.0;
    for (int i = 0; i < p; ++i) log_det += std::log(dens[j].chol(i, i));
    dens[j].constant = -0.5 * p * kLogTwoPi - log_det;
  }

  // Scaled forward pass only; O(K) memory.
  Eigen::RowVectorXd alpha(k), next(k), logp(k), pobs(k);
  double log_norm = 0.0;
  for (long t = 0; t < len; ++t) {
    const Vector y = test.row(t).transpose();
    for (int j = 0; j < k; ++j) {
      const Vector solved = dens[j].chol.triangularView<Eigen::Lower>().solve(y - dens[j].mean);
      logp[j] = dens[j].constant - 0.5 * solved.squaredNorm();
    }
    const double m = logp.maxCoeff();
    for (int j = 0; j < k; ++j) pobs[j] = std::exp(logp[j] - m);
    if (t == 0)
      next = point.init_dist.transpose().cwiseProduct(pobs);
    else
      next = (alpha * point.trans).cwiseProduct(pobs);
    const double c = next.sum();
    if (!(c > 0.0)) throw std::runtime_error("predictive_log_prob: zero forward mass");
    alpha = next / c;
    log_norm += std::log(c) + m;
  }
  return log_norm / static_cast<double>(len);
}

RunResult run_one(const Eigen::Ref<const RowMatrix>& train,
                  const Eigen::Ref<const RowMatrix>& test, int num_states,
                  const DirichletNat& prior_trans, const NiwNat& prior_emission,
                  const HmmParams* truth, const RunSetting& setting, std::uint64_t seed,
                  const std::string& run_id) {
  RunResult result;
  result.run_id = run_id;
  result.seed = seed;
  result.setting = setting;

  if (setting.algorithm == "batch") {
    BatchOptions opts;
    opts.max_iters = setting.batch_max_iters;
    opts.rel_tol = setting.batch_tol;
    result.trace = run_batch_vb(train, num_states, prior_trans, prior_emission, seed, opts);
  } else if (setting.algorithm == "svi") {
    SviConfig config;
    config.subchain_len = setting.L;
    config.minibatch = setting.M;
    config.kappa = setting.kappa;
    config.iters = setting.iters;
    config.epsilon = setting.epsilon;
    config.grow_step = setting.grow_step;
    config.use_growbuf = setting.growbuf;
    config.seed = seed;
    const RowMatrix empty;
    result.trace = run_svihmm(train, num_states, prior_trans, prior_emission, config,
                              (setting.record_objective && test.rows() > 0)
                                  ? test
                                  : Eigen::Ref<const RowMatrix>(empty));
  } else {
    throw std::invalid_argument("run_one: unknown algorithm " + setting.algorithm);
  }

  result.iters_run = static_cast<int>(result.trace.rows.size());
  if (!result.trace.rows.empty()) {
    result.total_seconds = result.trace.rows.back().seconds;
    result.per_iter_seconds = result.total_seconds / result.iters_run;
  }
  if (test.rows() > 0) result.pred_logprob = predictive_log_prob(result.trace.final, test);
  if (truth != nullptr) result.trans_error = transition_error(result.trace.final, *truth);
  return result;
}

void write_trace_csv(const std::string& path, const FitTrace& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trace_csv: cannot open " + path);
  os << std::setprecision(17);
  os << "iter,rho,objective,buffer_added_total,wall_seconds\n";
  for (const auto& row : trace.rows)
    os << row.iter << ',' << row.rho << ',' << row.objective << ',' << row.buffer_added << ','
       << row.seconds << '\n';
  if (!os) throw std::runtime_error("write_trace_csv: write failed");
}

void write_results_csv(const std::string& path, const std::vector<RunResult>& results) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_results_csv: cannot open " + path);
  os << std::setprecision(17);
  os << "run_id,seed,algorithm,L,M,kappa,epsilon,growbuf,iters,trans_error,pred_logprob,"
        "total_seconds,per_iter_seconds\n";
  for (const auto& r : results) {
    os << r.run_id << ',' << r.seed << ',' << r.setting.algorithm << ',' << r.setting.L << ','
       << r.setting.M << ',' << r.setting.kappa << ',' << r.setting.epsilon << ','
       << (r.setting.growbuf ? 1 : 0) << ',' << r.iters_run << ',' << r.trans_error << ','
       << r.pred_logprob << ',' << r.total_seconds << ',' << r.per_iter_seconds << '\n';
  }
  if (!os) throw std::runtime_error("write_results_csv: write failed");
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  RowMatrix data;
  std::optional<HmmParams> truth;
  if (config.generator == "dd" || config.generator == "rc") {
    const HmmParams params = config.generator == "dd" ? make_dd_params() : make_rc_params();
    data = sample_hmm(params, config.T, config.data_seed).obs;
    truth = params;
  } else {
    data = read_dataset(config.generator).obs;
  }

  const long T = data.rows();
  const long test_len = std::max<long>(1, static_cast<long>(std::floor(T * config.test_fraction)));
  const long train_len = T - test_len;
  if (train_len < 2) throw std::invalid_argument("run_experiment: training split too short");
  const auto train = data.topRows(train_len);
  const auto test = data.bottomRows(test_len);

  const auto [prior_trans, prior_emission] = default_prior(train, config.num_states);

  std::vector<RunResult> results;
  const std::string results_path = config.out_dir + "/results.csv";
  for (std::size_t s = 0; s < config.settings.size(); ++s) {
    for (int r = 0; r < config.restarts; ++r) {
      const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(r);
      const RunSetting& setting = config.settings[s];
      std::string run_id = config.name + "_" + setting.algorithm;
      if (setting.algorithm == "svi")
        run_id += "_L" + std::to_string(setting.L) + "_M" + std::to_string(setting.M) +
                  (setting.growbuf ? "_gb" : "");
      run_id += "_s" + std::to_string(seed);
      try {
        results.push_back(run_one(train, test, config.num_states, prior_trans, prior_emission,
                                  truth ? &*truth : nullptr, setting, seed, run_id));
      } catch (const std::exception& ex) {
        // Flush what we have before propagating.
        write_results_csv(results_path, results);
        std::cerr << "run_experiment: run " << run_id << " failed: " << ex.what() << "\n";
        throw;
      }
      write_trace_csv(config.out_dir + "/trace_" + run_id + ".csv", results.back().trace);
    }
  }
  write_results_csv(results_path, results);
  return results;
}

}  // namespace svihmm
