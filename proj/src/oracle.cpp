#include "ldpinf/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include "ldpinf/correction.hpp"
#include "parallel.hpp"

namespace ldpinf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<LinearFit> fit_line(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace

const char* to_string(Correction c) { return c == Correction::Flc ? "flc" : "none"; }

const char* to_string(PerturbMode m) {
  switch (m) {
    case PerturbMode::Features:
      return "features";
    case PerturbMode::Labels:
      return "labels";
    case PerturbMode::Both:
      return "both";
  }
  return "?";
}

Correction parse_correction(const std::string& name) {
  if (name == "none") return Correction::None;
  if (name == "flc") return Correction::Flc;
  throw ConfigError("oracle: unknown correction '" + name + "'");
}

PerturbMode parse_perturb_mode(const std::string& name) {
  if (name == "features") return PerturbMode::Features;
  if (name == "labels") return PerturbMode::Labels;
  if (name == "both") return PerturbMode::Both;
  throw ConfigError("oracle: unknown mode '" + name + "'");
}

OracleResult retrain_actual(const Dataset& records, const EncodedDataset& train, const EncodedDataset& test,
                            const ModelParams& baseline, const GroupSpec& group, const PerturbationPlan& plan,
                            Correction correction, const TrainConfig& cfg, std::uint64_t seed) {
  const auto start = Clock::now();
  plan.validate();
  if (records.size() != static_cast<std::size_t>(train.size())) {
    throw DataError("oracle: categorical records are not aligned with the encoded data");
  }
  if (correction == Correction::Flc &&
      (plan.entries.size() != 1 || plan.entries.front().attribute != records.label_attribute)) {
    throw ConfigError("oracle: forward correction applies to label-only perturbation");
  }

  EncodedDataset perturbed = train;
  Vector row(train.width());
  for (auto i : group.train_rows) {
    if (i >= records.size()) throw DataError("oracle: group row out of range");
    const Record noisy = perturb_record(records.records[i], plan, record_seed(seed, i));
    train.encoder.encode_into(noisy, row);
    perturbed.design.row(static_cast<Index>(i)) = row.transpose();
    perturbed.labels[i] = noisy[records.label_attribute];
  }

  OracleResult out;
  if (correction == Correction::Flc) {
    const DistortionMatrix P(train.num_classes, plan.entries.front().epsilon);
    out.retrained = train_with_flc(perturbed, FlcObjective(P, group.train_rows, records.size()), cfg);
  } else {
    out.retrained = ldpinf::train(perturbed, cfg);
  }
  out.converged = out.retrained.info.converged;
  if (!out.converged) {
    warn("oracle: retrain stopped at gradient norm " + std::to_string(out.retrained.info.grad_norm));
  }
  const double before = average_loss(test, baseline, group.test_rows);
  const double after = average_loss(test, out.retrained, group.test_rows);
  out.signed_delta = after - before;
  out.absolute_delta = std::abs(out.signed_delta);
  out.seconds = seconds_since(start);
  return out;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("oracle: spearman inputs differ in length");
  if (a.size() < 2) throw DataError("oracle: spearman needs at least two points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    warn("oracle: spearman input is constant; reporting 0");
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

double mae(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("oracle: mae inputs differ in length");
  if (a.empty()) throw DataError("oracle: mae of empty lists");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

OracleMode OracleMode::parse(const std::string& text) {
  OracleMode m;
  if (text == "off") return m;
  if (text == "on") {
    m.kind = Kind::On;
    return m;
  }
  const std::string prefix = "subsample:";
  if (text.rfind(prefix, 0) == 0) {
    m.kind = Kind::Subsample;
    try {
      m.count = std::stoul(text.substr(prefix.size()));
    } catch (const std::exception&) {
      throw ConfigError("oracle: bad subsample count in '" + text + "'");
    }
    if (m.count < 2) throw ConfigError("oracle: subsample needs at least two epsilon values");
    return m;
  }
  throw ConfigError("oracle: unknown oracle mode '" + text + "'");
}

std::string OracleMode::to_string() const {
  switch (kind) {
    case Kind::Off:
      return "off";
    case Kind::On:
      return "on";
    case Kind::Subsample:
      return "subsample:" + std::to_string(count);
  }
  return "?";
}

void SweepOptions::validate() const {
  if (epsilons.empty()) throw ConfigError("sweep: epsilon grid is empty");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw ConfigError("sweep: epsilon values must be positive");
  }
  if (repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  if (correction == Correction::Flc && mode != PerturbMode::Labels) {
    throw ConfigError("sweep: forward correction requires labels mode");
  }
  if (mode != PerturbMode::Labels && feature_attributes.empty()) {
    throw ConfigError("sweep: features/both modes need feature_attributes");
  }
  ihvp.validate();
  train.validate();
}

std::vector<GroupSummary> summarize_rows(const std::vector<SweepRow>& rows, OracleMode oracle) {
  std::vector<GroupSummary> out;
  for (const auto& row : rows) {
    if (out.empty() || out.back().group != row.group) out.push_back({row.group, row.k, row.group_size, {}, {}, {}});
  }
  if (oracle.kind == OracleMode::Kind::Off) return out;
  for (auto& g : out) {
    std::vector<double> est;
    std::vector<double> act;
    for (const auto& row : rows) {
      if (row.group == g.group && row.actual) {
        est.push_back(row.estimated);
        act.push_back(*row.actual);
      }
    }
    if (est.empty()) continue;
    g.mae = mae(est, act);
    if (est.size() >= 2) g.rho = spearman_rho(est, act);
    if (oracle.kind == OracleMode::Kind::Subsample) g.fit = fit_line(est, act);
  }
  return out;
}

SweepReport run_sweep_comparison(const SweepData& data, const std::vector<GroupSpec>& groups,
                                 const SweepOptions& options) {
  options.validate();
  if (groups.empty()) throw ConfigError("sweep: no groups");
  const auto& records = data.train_records;

  std::vector<std::pair<std::string, double>> planned;
  if (options.mode != PerturbMode::Labels) {
    for (const auto& f : options.feature_attributes) {
      if (records.attribute_index(f) == records.label_attribute) {
        throw ConfigError("sweep: feature_attributes must not contain the label");
      }
      planned.emplace_back(f, 1.0);
    }
  }
  if (options.mode != PerturbMode::Features) {
    planned.emplace_back(records.attributes[records.label_attribute].name, 1.0);
  }
  const auto plan_template = PerturbationPlan::make(records, planned, PlanMode::Expectation);

  SweepReport report;
  const auto& base = data.baseline;
  report.baseline = {static_cast<std::size_t>(data.train.size()),
                     static_cast<std::size_t>(data.test.size()),
                     data.train.width(),
                     base.dim(),
                     average_loss(data.test, base),
                     accuracy(data.test, base),
                     base.info.epochs,
                     base.info.grad_norm,
                     base.info.converged};

  // One cache per distinct S_te; with the default S_te = Z_te there is exactly one.
  std::vector<std::unique_ptr<TestGradientCache>> caches;
  std::vector<std::size_t> cache_of(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::size_t found = caches.size();
    for (std::size_t c = 0; c < caches.size(); ++c) {
      if (caches[c]->valid_for(base, groups[g].test_rows, options.ihvp)) found = c;
    }
    if (found == caches.size()) {
      caches.push_back(
          std::make_unique<TestGradientCache>(data.train, base, data.test, groups[g].test_rows, options.ihvp));
      report.timing.ihvp_seconds += caches.back()->seconds();
      ++report.timing.ihvp_solves;
    }
    cache_of[g] = found;
  }

  const std::size_t E = options.epsilons.size();
  report.rows.resize(groups.size() * E);
  const auto estimate_start = Clock::now();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& cache = *caches[cache_of[g]];
    for (std::size_t e = 0; e < E; ++e) {
      const double eps = options.epsilons[e];
      InfluenceResult r;
      if (options.correction == Correction::Flc) {
        r = influence_rr_flc(data.train, base, groups[g].train_rows, eps, cache);
      } else if (options.mode == PerturbMode::Labels && options.scaling == ScalingMode::ExpectationExact) {
        r = influence_rr_label(data.train, base, groups[g].train_rows, eps, cache);
      } else {
        r = influence_rr(records, data.train, base, groups[g].train_rows, plan_template.with_epsilon(eps),
                         options.scaling, cache, options.outcome_cap);
      }
      auto& row = report.rows[g * E + e];
      row.group = g;
      row.k = groups[g].rule.fraction;
      row.group_size = groups[g].train_rows.size();
      row.epsilon = eps;
      row.estimated = r.estimated_loss_delta;
      ++report.timing.estimate_calls;
    }
  }
  report.timing.estimate_seconds = seconds_since(estimate_start);

  if (options.oracle.kind != OracleMode::Kind::Off) {
    std::vector<std::size_t> eps_indices(E);
    std::iota(eps_indices.begin(), eps_indices.end(), 0);
    if (options.oracle.kind == OracleMode::Kind::Subsample && options.oracle.count < E) {
      eps_indices.clear();
      const std::size_t m = options.oracle.count;
      for (std::size_t j = 0; j < m; ++j) {
        eps_indices.push_back(static_cast<std::size_t>(
            std::llround(static_cast<double>(j) * static_cast<double>(E - 1) / static_cast<double>(m - 1))));
      }
    }
    struct Task {
      std::size_t row;
      int repeat;
    };
    std::vector<Task> tasks;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (auto e : eps_indices) {
        for (int r = 0; r < options.repeats; ++r) tasks.push_back({g * E + e, r});
      }
    }
    std::vector<OracleResult> results(tasks.size());
    const auto oracle_start = Clock::now();
    detail::parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
      const auto& task = tasks[t];
      const std::size_t g = task.row / E;
      // The randomized-response seed depends only on the repeat, so every
      // epsilon and group in a repeat shares the same uniform draws.
      const auto seed = mix_seed(options.seed, static_cast<std::uint64_t>(task.repeat));
      auto res = retrain_actual(records, data.train, data.test, base, groups[g],
                                plan_template.with_epsilon(options.epsilons[task.row % E]),
                                options.correction, options.train, seed);
      res.retrained = {};
      results[t] = std::move(res);
    });
    report.timing.oracle_seconds = seconds_since(oracle_start);
    report.timing.retrain_count = static_cast<int>(tasks.size());

    std::vector<double> abs_sum(report.rows.size(), 0.0);
    std::vector<double> signed_sum(report.rows.size(), 0.0);
    std::vector<int> hits(report.rows.size(), 0);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      abs_sum[tasks[t].row] += results[t].absolute_delta;
      signed_sum[tasks[t].row] += results[t].signed_delta;
      ++hits[tasks[t].row];
      report.timing.retrain_seconds += results[t].seconds;
    }
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      if (hits[i] == 0) continue;
      report.rows[i].actual = abs_sum[i] / hits[i];
      report.rows[i].actual_signed = signed_sum[i] / hits[i];
    }
  }

  report.groups = summarize_rows(report.rows, options.oracle);
  for (const auto& g : report.groups) {
    if (!g.fit) continue;
    for (auto& row : report.rows) {
      if (row.group == g.group) row.calibrated = g.fit->slope * row.estimated + g.fit->intercept;
    }
  }
  return report;
}

}  // namespace ldpinf
