#include <fstream>
#include <map>
#include <sstream>

#include "chunkgrpo/error.hpp"
#include "chunkgrpo/harness.hpp"
#include "chunkgrpo/prop_oracle.hpp"
#include "chunkgrpo/serialize.hpp"
#include "chunkgrpo/svg.hpp"

namespace chunkgrpo {

namespace fs = std::filesystem;

namespace {

std::vector<double> index_axis(std::size_t n, double offset = 0.0) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = static_cast<double>(i) + offset;
  }
  return xs;
}

void add_profile_series(SvgChart& chart, const Json& doc, const std::string& prefix) {
  if (doc.contains("pretrained")) {
    const auto v = doc["pretrained"]["values"].get<std::vector<double>>();
    chart.add({prefix + "pre-RL", index_axis(v.size(), 1.0), v});
  }
  if (doc.contains("post_rl")) {
    const auto v = doc["post_rl"]["values"].get<std::vector<double>>();
    chart.add({prefix + "post-RL", index_axis(v.size(), 1.0), v});
  }
}

void scatter_by_mode(SvgChart& chart, const Json& samples) {
  std::map<std::size_t, Series> by_mode;
  for (const auto& s : samples) {
    const std::size_t mode = s.at("mode").get<std::size_t>();
    auto& series = by_mode[mode];
    series.label = "mode " + std::to_string(mode);
    series.scatter = true;
    series.color = palette()[mode % palette().size()];
    series.x.push_back(s.at("x")[0].get<double>());
    series.y.push_back(s.at("x")[1].get<double>());
  }
  for (auto& [mode, series] : by_mode) {
    chart.add(std::move(series));
  }
  chart.set_equal_aspect(true);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

void write_run_plots(const fs::path& run) {
  const fs::path plots = run / "plots";
  fs::create_directories(plots);
  if (fs::exists(run / "metrics.csv")) {
    const auto rows = read_metrics_csv(run / "metrics.csv");
    SvgChart reward("Reward", "update", "reward");
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<double> ex;
    std::vector<double> ey;
    std::vector<double> clip;
    for (const auto& r : rows) {
      xs.push_back(static_cast<double>(r.update + 1));
      ys.push_back(r.reward_mean);
      clip.push_back(r.clip_fraction);
      if (r.eval_reward) {
        ex.push_back(static_cast<double>(r.update + 1));
        ey.push_back(*r.eval_reward);
      }
    }
    reward.add({"rollout mean", xs, ys});
    reward.add({"evaluation", ex, ey});
    std::ofstream(plots / "reward.svg") << reward.render();
    SvgChart clip_chart("Clipped unit fraction", "update", "fraction");
    clip_chart.add({"clip", xs, clip});
    std::ofstream(plots / "clip.svg") << clip_chart.render();
  }
  if (fs::exists(run / "profile.json")) {
    const Json doc = read_json(run / "profile.json");
    SvgChart chart("Relative L1 change per transition", "transition", "L1_rel");
    add_profile_series(chart, doc, "");
    std::ofstream(plots / "profile.svg") << chart.render();
    if (doc.contains("per_condition")) {
      SvgChart per("Relative L1 change by condition", "transition", "L1_rel");
      for (std::size_t c = 0; c < doc["per_condition"].size(); ++c) {
        const auto v = doc["per_condition"][c]["values"].get<std::vector<double>>();
        per.add({"condition " + std::to_string(c), index_axis(v.size(), 1.0), v});
      }
      std::ofstream(plots / "profile_conditions.svg") << per.render();
    }
  }
  if (fs::exists(run / "samples.json")) {
    const Json doc = read_json(run / "samples.json");
    for (const char* key : {"baseline", "trained"}) {
      if (!doc.contains(key)) {
        continue;
      }
      SvgChart chart(std::string("Samples (") + key + ")", "x1", "x2");
      scatter_by_mode(chart, doc[key]);
      std::ofstream(plots / (std::string("samples_") + key + ".svg")) << chart.render(560, 460);
    }
  }
}

void write_oracle_outputs(std::size_t max_steps, const fs::path& out) {
  fs::create_directories(out);
  const auto rows = win_region(max_steps);
  std::ofstream csv(out / "win_region.csv");
  csv << "T,m,grpo_distance,chunk_distance,chunk_wins,printed_rule\n";
  for (const auto& r : rows) {
    csv << r.steps << ',' << r.m << ',' << r.grpo_distance.numerator() << ',' << r.chunk_distance.numerator() << '/'
        << r.chunk_distance.denominator() << ',' << (r.chunk_wins ? 1 : 0) << ',' << (r.printed_rule ? 1 : 0)
        << '\n';
  }
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  for (std::size_t T = 2; T <= max_steps; ++T) {
    row_labels.push_back(std::to_string(T));
  }
  for (std::size_t m = 1; m <= max_steps; ++m) {
    col_labels.push_back(std::to_string(m));
  }
  std::vector<std::vector<HeatmapCell>> cells(row_labels.size(), std::vector<HeatmapCell>(col_labels.size()));
  for (const auto& r : rows) {
    const double margin = boost::rational_cast<double>(r.grpo_distance - r.chunk_distance);
    HeatmapCell& cell = cells[r.steps - 2][r.m - 1];
    cell.value = margin;
    cell.text = r.chunk_wins ? (r.printed_rule ? "C" : "C*") : "S";
  }
  std::ofstream(out / "win_region.svg") << heatmap_svg(
      "Distance margin |J-J_GRPO|^2 - |J-J_chunk|^2 (C: chunk closer, *: outside printed rule)", "T", "m",
      row_labels, col_labels, cells, -static_cast<double>(max_steps) * 2.0, static_cast<double>(max_steps) * 2.0);
}

fs::path emit_report(const std::vector<fs::path>& runs, const fs::path& out) {
  fs::create_directories(out);
  std::ostringstream md;
  md << "# Run report\n";
  if (runs.empty()) {
    std::ofstream(out / "report.md") << md.str();
    return out / "report.md";
  }

  std::vector<fs::path> usable;
  std::vector<std::string> notices;
  for (const auto& r : runs) {
    if (fs::exists(r / "metrics.csv")) {
      usable.push_back(r);
    } else {
      notices.push_back("skipped " + r.string() + ": no metrics.csv");
    }
  }

  md << "\n| run | variant | plan | baseline | final (hybrid) | final (policy) |\n|---|---|---|---|---|---|\n";
  SvgChart rewards("Evaluation reward", "update", "reward");
  SvgChart profiles("Relative L1 change, pre- vs post-RL", "transition", "L1_rel");
  for (const auto& r : usable) {
    const std::string name = r.filename().string();
    const auto rows = read_metrics_csv(r / "metrics.csv");
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& row : rows) {
      if (row.eval_reward) {
        xs.push_back(static_cast<double>(row.update + 1));
        ys.push_back(*row.eval_reward);
      }
    }
    if (fs::exists(r / "summary.json")) {
      const Json s = read_json(r / "summary.json");
      xs.insert(xs.begin(), 0.0);
      ys.insert(ys.begin(), s.at("baseline_reward").get<double>());
      md << "| " << name << " | " << s.at("variant").get<std::string>() << " | "
         << format_size_list(s.at("plan").at("sizes").get<std::vector<std::size_t>>()) << " | "
         << fmt(s.at("baseline_reward").get<double>()) << " | " << fmt(s.at("final_reward").get<double>()) << " | "
         << fmt(s.at("policy_reward").get<double>()) << " |\n";
    } else {
      md << "| " << name << " | | | | " << (ys.empty() ? std::string() : fmt(ys.back())) << " | |\n";
    }
    rewards.add({name, xs, ys});
    if (fs::exists(r / "profile.json")) {
      add_profile_series(profiles, read_json(r / "profile.json"), name + " ");
    }
    if (fs::exists(r / "samples.json")) {
      const Json doc = read_json(r / "samples.json");
      if (doc.contains("trained")) {
        SvgChart chart("Samples: " + name, "x1", "x2");
        scatter_by_mode(chart, doc["trained"]);
        std::ofstream(out / ("samples_" + name + ".svg")) << chart.render(560, 460);
        md << "\n![samples " << name << "](samples_" << name << ".svg)\n";
      }
    }
  }
  for (const auto& n : notices) {
    md << "\n" << n << "\n";
  }
  std::ofstream(out / "rewards.svg") << rewards.render(720, 440);
  md << "\n![rewards](rewards.svg)\n";
  if (!profiles.empty()) {
    std::ofstream(out / "profiles.svg") << profiles.render(720, 440);
    md << "\n![profiles](profiles.svg)\n";
  }
  write_oracle_outputs(12, out);
  md << "\n![oracle](win_region.svg)\n";
  std::ofstream(out / "report.md") << md.str();
  return out / "report.md";
}

}  // namespace chunkgrpo
