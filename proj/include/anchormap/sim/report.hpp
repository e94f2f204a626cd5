#ifndef ANCHORMAP_SIM_REPORT_HPP_
#define ANCHORMAP_SIM_REPORT_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "anchormap/sim/fusion_demo.hpp"
#include "anchormap/sim/pipeline.hpp"

namespace anchormap::sim
{
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kResultsCsvHeader =
    "realization,anchor_id,stage,ok,samples,position_error_m,gamma_error_m,beta_error";
inline constexpr int kResultsCsvColumns = 8;

namespace detail
{
// NaN is written as null and read back as NaN.
inline nlohmann::json num(double v)
{
  if (std::isfinite(v))
    return v;
  return nullptr;
}

inline double num_from(const nlohmann::json& j)
{
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline std::string fmt(double v)
{
  if (!std::isfinite(v))
    return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
  if (path.has_parent_path())
  {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
      throw Error(ErrorCode::Io, path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
  out.flush();
  if (!out)
    throw Error(ErrorCode::Io, "write failed for " + path.string());
}
}  // namespace detail

/// Everything except "timing" is reproducible for a fixed scenario and seed.
inline nlohmann::json report_to_json(const RunReport& rep)
{
  using nlohmann::json;
  json rows = json::array();
  for (const auto& r : rep.rows)
  {
    json stages = json::array();
    for (const auto& st : r.stages)
    {
      json anchors = json::array();
      for (const auto& a : st.anchors)
      {
        json ja = {{"anchor_id", a.anchor_id},
                   {"ok", a.ok},
                   {"position_error_m", detail::num(a.position_error)},
                   {"gamma_error_m", detail::num(a.gamma_error)},
                   {"beta_error", detail::num(a.beta_error)}};
        if (a.ok)
          ja["estimate"] = {{"position_m", detail::vec_json(a.estimate.position)},
                            {"gamma_m", a.estimate.gamma},
                            {"beta", a.estimate.beta}};
        else
          ja["error"] = a.error;
        anchors.push_back(std::move(ja));
      }
      stages.push_back({{"stage", to_string(st.stage)}, {"samples", st.samples}, {"anchors", std::move(anchors)}});
    }
    rows.push_back({{"realization", r.index},
                    {"stages", std::move(stages)},
                    {"optimizer_cost", detail::num(r.optimizer_cost)},
                    {"optimizer_generations", r.optimizer_generations}});
  }
  json aggregates = json::array();
  for (const auto& a : rep.aggregates)
    aggregates.push_back({{"stage", to_string(a.stage)},
                          {"count", a.count},
                          {"mean_position_error_m", detail::num(a.mean_position_error)},
                          {"std_position_error_m", detail::num(a.std_position_error)}});
  json timing = json::object();
  for (const auto& [k, v] : rep.wall_clock_s)
    timing[k + "_s"] = v;
  return {{"schema_version", rep.schema_version},
          {"scenario_name", rep.scenario_name},
          {"scenario_hash", rep.scenario_hash},
          {"rng_seed", rep.rng_seed},
          {"realizations", rep.realizations},
          {"rows", std::move(rows)},
          {"aggregates", std::move(aggregates)},
          {"timing", std::move(timing)}};
}

inline RunReport report_from_json(const nlohmann::json& j)
{
  const int version = j.at("schema_version").get<int>();
  if (version > kReportSchemaVersion)
    throw Error(ErrorCode::SchemaVersion, "results schema_version " + std::to_string(version) +
                                              " is newer than supported " + std::to_string(kReportSchemaVersion));
  RunReport rep;
  try
  {
    rep.schema_version = version;
    rep.scenario_name = j.at("scenario_name").get<std::string>();
    rep.scenario_hash = j.at("scenario_hash").get<std::string>();
    rep.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    rep.realizations = j.at("realizations").get<int>();
    for (const auto& jr : j.at("rows"))
    {
      RealizationResult r;
      r.index = jr.at("realization").get<int>();
      r.optimizer_cost = detail::num_from(jr.at("optimizer_cost"));
      r.optimizer_generations = jr.at("optimizer_generations").get<int>();
      for (const auto& js : jr.at("stages"))
      {
        StageResult st;
        st.stage = stage_from_string(js.at("stage").get<std::string>());
        st.samples = js.at("samples").get<std::size_t>();
        for (const auto& ja : js.at("anchors"))
        {
          AnchorStageResult a;
          a.anchor_id = ja.at("anchor_id").get<int>();
          a.ok = ja.at("ok").get<bool>();
          a.position_error = detail::num_from(ja.at("position_error_m"));
          a.gamma_error = detail::num_from(ja.at("gamma_error_m"));
          a.beta_error = detail::num_from(ja.at("beta_error"));
          if (ja.contains("estimate"))
          {
            const auto& e = ja["estimate"];
            a.estimate.position = detail::json_vec(e.at("position_m"));
            a.estimate.gamma = e.at("gamma_m").get<double>();
            a.estimate.beta = e.at("beta").get<double>();
          }
          a.error = ja.value("error", std::string{});
          st.anchors.push_back(std::move(a));
        }
        r.stages.push_back(std::move(st));
      }
      rep.rows.push_back(std::move(r));
    }
    for (const auto& ja : j.at("aggregates"))
    {
      StageAggregate a;
      a.stage = stage_from_string(ja.at("stage").get<std::string>());
      a.count = ja.at("count").get<int>();
      a.mean_position_error = detail::num_from(ja.at("mean_position_error_m"));
      a.std_position_error = detail::num_from(ja.at("std_position_error_m"));
      rep.aggregates.push_back(a);
    }
    if (j.contains("timing"))
      for (const auto& [k, v] : j["timing"].items())
        rep.wall_clock_s[k.substr(0, k.size() - 2)] = v.get<double>();
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(ErrorCode::SchemaVersion, std::string("malformed results file: ") + e.what());
  }
  return rep;
}

inline std::string results_csv(const RunReport& rep)
{
  std::ostringstream os;
  os << kResultsCsvHeader << '\n';
  for (const auto& r : rep.rows)
    for (const auto& st : r.stages)
      for (const auto& a : st.anchors)
        os << r.index << ',' << a.anchor_id << ',' << to_string(st.stage) << ',' << (a.ok ? 1 : 0) << ','
           << st.samples << ',' << detail::fmt(a.position_error) << ',' << detail::fmt(a.gamma_error) << ','
           << detail::fmt(a.beta_error) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  auto out = detail::open_out(path);
  out << text;
  detail::finish(out, path);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
  write_text(path, j.dump(2) + "\n");
}

/// Writes results.json and results.csv into `dir`.
inline void emit_report(const RunReport& rep, const std::filesystem::path& dir)
{
  write_json(dir / "results.json", report_to_json(rep));
  write_text(dir / "results.csv", results_csv(rep));
}

inline nlohmann::json read_json(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Io, "cannot open " + path.string());
  try
  {
    nlohmann::json j;
    in >> j;
    return j;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

inline RunReport read_report(const std::filesystem::path& path) { return report_from_json(read_json(path)); }

inline std::string state_log_csv(const FusionRun& run)
{
  std::ostringstream os;
  os << "t,px,py,pz,vx,vy,vz,trace_P";
  if (!run.log.empty())
    for (const auto& a : run.log.front().anchors)
    {
      const std::string p = "anchor" + std::to_string(a.id) + "_";
      os << ',' << p << "x," << p << "y," << p << "z," << p << "beta," << p << "gamma";
    }
  os << '\n';
  for (const auto& row : run.log)
  {
    os << detail::fmt(row.t);
    for (int i = 0; i < 3; ++i)
      os << ',' << detail::fmt(row.position(i));
    for (int i = 0; i < 3; ++i)
      os << ',' << detail::fmt(row.velocity(i));
    os << ',' << detail::fmt(row.trace_P);
    for (const auto& a : row.anchors)
      os << ',' << detail::fmt(a.position.x()) << ',' << detail::fmt(a.position.y()) << ','
         << detail::fmt(a.position.z()) << ',' << detail::fmt(a.beta) << ',' << detail::fmt(a.gamma);
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json fusion_to_json(const FusionReport& f)
{
  return {{"schema_version", kReportSchemaVersion},
          {"rmse_ranges_on_m", detail::num(f.rmse_on)},
          {"rmse_ranges_off_m", detail::num(f.rmse_off)},
          {"rmse_reduction", detail::num(f.rmse_reduction)},
          {"has_dropout", f.has_dropout},
          {"pre_dropout_rmse_m", detail::num(f.pre_dropout_rmse)},
          {"post_dropout_rmse_m", detail::num(f.post_dropout_rmse)},
          {"terminal_error_ranges_on_m", detail::num(f.terminal_error_on)},
          {"terminal_error_ranges_off_m", detail::num(f.terminal_error_off)},
          {"settle_s", f.settle_s},
          {"window_s", f.window_s}};
}

/// Per-time error series of the paired runs, plot-ready.
inline std::string fusion_error_csv(const FusionReport& f)
{
  std::ostringstream os;
  os << "t,error_ranges_on_m,error_ranges_off_m\n";
  for (std::size_t i = 0; i < f.ranges_on.t.size(); ++i)
    os << detail::fmt(f.ranges_on.t[i]) << ',' << detail::fmt(f.ranges_on.error[i]) << ','
       << detail::fmt(f.ranges_off.error[i]) << '\n';
  return os.str();
}

inline nlohmann::json waypoints_to_json(const EvoResult& plan, std::span<const Vec3> anchor_estimates)
{
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& w : plan.waypoints)
    wps.push_back(detail::vec_json(w));
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : anchor_estimates)
    anchors.push_back(detail::vec_json(a));
  return {{"schema_version", kReportSchemaVersion},
          {"waypoints_m", std::move(wps)},
          {"anchor_estimates_m", std::move(anchors)},
          {"mean_gdop", detail::num(plan.final_cost)},
          {"generations", plan.generations}};
}

}  // namespace anchormap::sim

#endif  // ANCHORMAP_SIM_REPORT_HPP_
