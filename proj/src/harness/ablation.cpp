#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "chunkgrpo/error.hpp"
#include "chunkgrpo/harness.hpp"
#include "chunkgrpo/serialize.hpp"
#include "chunkgrpo/svg.hpp"

namespace chunkgrpo {

namespace fs = std::filesystem;

std::string_view suite_name(Suite s) {
  switch (s) {
    case Suite::chunk_settings:
      return "chunk-settings";
    case Suite::specific_chunks:
      return "specific-chunks";
    case Suite::weighted_sampling:
      return "weighted-sampling";
  }
  return "chunk-settings";
}

Suite parse_suite(std::string_view name) {
  if (name == "chunk-settings") {
    return Suite::chunk_settings;
  }
  if (name == "specific-chunks") {
    return Suite::specific_chunks;
  }
  if (name == "weighted-sampling") {
    return Suite::weighted_sampling;
  }
  throw InputError("unknown ablation suite '" + std::string(name) + "'");
}

namespace {

/// Equal-size plans whose chunk sizes divide the transition count: 2, 4, 8, ... up to all of it.
std::vector<std::size_t> equal_chunk_sizes(std::size_t transitions) {
  std::vector<std::size_t> out;
  for (std::size_t s = 2; s <= transitions; s *= 2) {
    if (transitions % s == 0) {
      out.push_back(s);
    }
  }
  if (out.empty() || out.back() != transitions) {
    out.push_back(transitions);
  }
  return out;
}

}  // namespace

std::vector<AblationEntry> ablation_grid(Suite suite, const RunConfig& base) {
  std::vector<AblationEntry> grid;
  const std::size_t L = base.steps - 1;
  auto with = [&](std::string label, auto mutate) {
    RunConfig c = base;
    mutate(c);
    grid.push_back({std::move(label), std::move(c)});
  };
  switch (suite) {
    case Suite::chunk_settings:
      with("step", [](RunConfig& c) { c.variant = Variant::step; });
      for (std::size_t s : equal_chunk_sizes(L)) {
        with("equal-" + std::to_string(s), [&](RunConfig& c) {
          c.variant = Variant::chunk;
          c.plan_source = PlanSource::fixed;
          c.plan_sizes.assign(L / s, s);
        });
      }
      with("dynamics", [](RunConfig& c) {
        c.variant = Variant::chunk;
        c.plan_source = PlanSource::dynamics;
      });
      break;
    case Suite::specific_chunks:
      for (std::size_t j = 0; j < base.chunk_count; ++j) {
        with("chunk-" + std::to_string(j), [&](RunConfig& c) {
          c.variant = Variant::chunk;
          c.plan_source = PlanSource::dynamics;
          c.grpo.train_chunks = {j};
        });
      }
      break;
    case Suite::weighted_sampling:
      for (bool ws : {false, true}) {
        with(ws ? "ws-on" : "ws-off", [&](RunConfig& c) {
          c.variant = Variant::chunk;
          c.plan_source = PlanSource::dynamics;
          c.grpo.weighted_sampling = ws;
        });
      }
      break;
  }
  return grid;
}

AblationReport ablation_suite(Suite suite, const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                              std::size_t jobs, std::ostream* log) {
  if (seeds.empty()) {
    throw InputError("ablation_suite: no seeds");
  }
  AblationReport report;
  report.suite = suite;
  report.dir = base.resolved_output_root() / ("ablate-" + std::string(suite_name(suite)));
  fs::create_directories(report.dir);

  const auto grid = ablation_grid(suite, base);
  struct Job {
    std::size_t entry;
    std::size_t seed_index;
    RunConfig config;
  };
  std::vector<Job> queue;
  for (std::size_t e = 0; e < grid.size(); ++e) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      RunConfig c = grid[e].config;
      c.seed = seeds[s];
      c.output_root = report.dir.string();
      c.name = grid[e].label + "-s" + std::to_string(seeds[s]);
      queue.push_back({e, s, std::move(c)});
    }
  }

  // Pretrain once up front so concurrent runs only read the cache.
  if (base.pretrain_checkpoint.empty()) {
    pretrained_policy(Context(base), log);
    const std::string cache = pretrain_cache_path(base).string();
    for (auto& job : queue) {
      job.config.pretrain_checkpoint = cache;
    }
  }

  std::vector<RunSummary> results(queue.size());
  std::vector<std::exception_ptr> errors(queue.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queue.size(); i = next++) {
      try {
        results[i] = run_pipeline(queue[i].config, log);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, queue.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  report.baseline_reward = results.front().baseline_reward;
  report.rows.resize(grid.size());
  for (std::size_t e = 0; e < grid.size(); ++e) {
    report.rows[e].label = grid[e].label;
  }
  for (std::size_t i = 0; i < queue.size(); ++i) {
    auto& row = report.rows[queue[i].entry];
    row.final_rewards.push_back(results[i].final_reward);
    row.runs.push_back(results[i].dir);
  }
  for (auto& row : report.rows) {
    const double n = static_cast<double>(row.final_rewards.size());
    for (double v : row.final_rewards) {
      row.mean += v / n;
    }
    double var = 0.0;
    for (double v : row.final_rewards) {
      var += (v - row.mean) * (v - row.mean);
    }
    row.stddev = std::sqrt(var / n);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const AblationRow& a, const AblationRow& b) { return a.mean > b.mean; });

  std::ofstream csv(report.dir / "ablation.csv");
  csv << "rank,label,mean_final_reward,std_final_reward";
  for (std::uint64_t s : seeds) {
    csv << ",seed_" << s;
  }
  csv << '\n';
  std::ofstream md(report.dir / "ablation.md");
  md << "# Ablation: " << suite_name(suite) << "\n\n";
  md << "Baseline (pretrained) reward: " << format_double(report.baseline_reward) << "\n\n";
  md << "| rank | setting | mean final reward | std |\n|---|---|---|---|\n";
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    const auto& row = report.rows[r];
    csv << r + 1 << ',' << row.label << ',' << format_double(row.mean) << ',' << format_double(row.stddev);
    for (double v : row.final_rewards) {
      csv << ',' << format_double(v);
    }
    csv << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "| %zu | %s | %.4f | %.4f |\n", r + 1, row.label.c_str(), row.mean, row.stddev);
    md << line;
  }

  // Mean evaluation curve per setting.
  SvgChart chart("Evaluation reward, mean over seeds", "update", "reward");
  for (const auto& row : report.rows) {
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<std::vector<MetricsRow>> per_seed;
    for (const auto& run : row.runs) {
      per_seed.push_back(read_metrics_csv(run / "metrics.csv"));
    }
    for (std::size_t u = 0; u < per_seed.front().size(); ++u) {
      if (!per_seed.front()[u].eval_reward) {
        continue;
      }
      double sum = 0.0;
      for (const auto& rows : per_seed) {
        sum += rows[u].eval_reward.value_or(0.0);
      }
      xs.push_back(static_cast<double>(u + 1));
      ys.push_back(sum / static_cast<double>(per_seed.size()));
    }
    xs.insert(xs.begin(), 0.0);
    ys.insert(ys.begin(), report.baseline_reward);
    chart.add({row.label, xs, ys});
  }
  std::ofstream(report.dir / "ablation.svg") << chart.render(720, 440);
  md << "\n![curves](ablation.svg)\n";
  return report;
}

}  // namespace chunkgrpo
