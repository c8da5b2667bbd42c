#pragma once

#include <string>
#include <utility>
#include <vector>

#include "topocov/config.hpp"

namespace topocov {

struct PlotSeries {
  std::string name;  // file suffix
  std::string xname, yname;
  std::vector<double> x, y;
};

// Everything a run emits. Summary rows start with
// format_version,experiment,config_hash,seed and never hold timings.
struct RunResult {
  std::string experiment;
  std::string header;
  std::vector<std::string> rows;
  std::string json;
  std::vector<PlotSeries> plots;
  std::vector<std::pair<std::string, std::string>> files;  // (suffix, content)
};

// Summary columns after the common prefix, per experiment:
//   sample         draw,method,nodes,mean,variance,min,max
//   piterbarg      m,rhs,lhs,mc_se,residual
//   formula        lhs,lhs_se,rhs,rhs_err,residual
//   mixing         separation,side,alpha,alpha_se,shape,envelope,bound,calibrated_bound
//   concentration  s,mean_count,mean_normalised,frequency,se,r,envelope
//   kostlan        degree,alpha,alpha_se,zeros_mean,zeros_se,zeros_expected
//   harris         s,self_integral,self_scaled,cross_integral,cross_scaled
std::string summary_header(const std::string& experiment);

RunResult run_experiment(const RunConfig& cfg);

// Appends rows to <out>/<experiment>_summary.csv and writes
// <out>/<experiment>_<hash>_<seed>.json plus one .dat file per plot series.
// Returns the paths written.
std::vector<std::string> emit_outputs(const RunResult& result, const RunConfig& cfg);

}  // namespace topocov
