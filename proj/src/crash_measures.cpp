#include "crashrisk/crash_measures.hpp"

#include <cmath>
#include <map>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/parallel.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk {

namespace {

double mean_of(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v;
  return s / static_cast<double>(w.size());
}

}  // namespace

double ncskew(std::span<const double> w) {
  const std::size_t count = w.size();
  if (count < 3) throw InsufficientDataError("NCSKEW needs at least 3 weeks");
  const double n = static_cast<double>(count);
  const double m = mean_of(w);
  double s2 = 0.0, s3 = 0.0;
  for (double v : w) {
    const double d = v - m;
    s2 += d * d;
    s3 += d * d * d;
  }
  if (!(s2 > 0.0)) throw UndefinedMeasureError("NCSKEW undefined for zero dispersion");
  return -(n * std::pow(n - 1.0, 1.5) * s3) / ((n - 1.0) * (n - 2.0) * std::pow(s2, 1.5));
}

UpDownCounts count_up_down(std::span<const double> w) {
  UpDownCounts c;
  if (w.empty()) return c;
  const double m = mean_of(w);
  for (double v : w) {
    if (v > m) ++c.up;
    if (v < m) ++c.down;
  }
  return c;
}

double duvol(std::span<const double> w) {
  if (w.empty()) throw InsufficientDataError("DUVOL needs at least 2 up and 2 down weeks");
  const double m = mean_of(w);
  double down = 0.0, up = 0.0;
  std::size_t n_down = 0, n_up = 0;
  for (double v : w) {
    const double d = v - m;
    if (v < m) {
      down += d * d;
      ++n_down;
    } else if (v > m) {
      up += d * d;
      ++n_up;
    }
  }
  if (n_up < 2 || n_down < 2) throw InsufficientDataError("insufficient up/down weeks");
  if (!(up > 0.0)) throw UndefinedMeasureError("DUVOL undefined: zero up-week dispersion");
  return std::log((static_cast<double>(n_up) - 1.0) * down / ((static_cast<double>(n_down) - 1.0) * up));
}

int crash_indicator(std::span<const double> w, double k, std::string* diagnostic) {
  if (w.size() < 2) throw InsufficientDataError("CRASH needs at least 2 weeks");
  const double m = mean_of(w);
  double ss = 0.0;
  for (double v : w) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (static_cast<double>(w.size()) - 1.0));
  if (!(sd > 0.0)) {
    if (diagnostic) *diagnostic = "no dispersion";
    return 0;
  }
  const double threshold = m - k * sd;
  for (double v : w)
    if (v < threshold) return 1;
  return 0;
}

CrashMeasures compute_all(const FirmYearSlice& slice, const MeasureConfig& config) {
  CrashMeasures out;
  out.firm_id = slice.firm_id;
  out.year = slice.year;
  out.n_weeks = slice.w.size();
  const auto counts = count_up_down(slice.w);
  out.n_up = counts.up;
  out.n_down = counts.down;
  out.ret = slice.ret_mean;
  out.sigma = slice.sigma;

  try {
    const mcd::NegOutlier neg = mcd::negoutlier(slice, config.mcd);
    out.negoutlier = neg.value;
    if (neg.fit) {
      out.mcd_h = neg.fit->h;
      out.mcd_location = neg.fit->location(0);
      out.mcd_scatter = neg.fit->scatter(0, 0);
      out.mcd_raw_determinant = neg.fit->raw_determinant;
      out.mcd_cutoff = neg.fit->cutoff;
    }
  } catch (const InsufficientDataError&) {
    out.negoutlier_reason = "below minimum weeks";
  } catch (const Error& e) {
    out.negoutlier_reason = e.what();
  }
  try {
    std::string diag;
    out.crash = crash_indicator(slice.w, config.crash_sigma, &diag);
  } catch (const InsufficientDataError&) {
    out.crash_reason = "below minimum weeks";
  }
  try {
    out.ncskew = ncskew(slice.w);
  } catch (const InsufficientDataError&) {
    out.ncskew_reason = "below minimum weeks";
  } catch (const UndefinedMeasureError&) {
    out.ncskew_reason = "no dispersion";
  }
  try {
    out.duvol = duvol(slice.w);
  } catch (const InsufficientDataError&) {
    out.duvol_reason = "insufficient up/down weeks";
  } catch (const UndefinedMeasureError&) {
    out.duvol_reason = "no up-week dispersion";
  }
  return out;
}

std::vector<CrashMeasures> compute_all_slices(const std::vector<FirmYearSlice>& slices, const MeasureConfig& config,
                                              unsigned threads) {
  mcd::validate(config.mcd);
  std::vector<CrashMeasures> out(slices.size());
  parallel_for(slices.size(), threads, [&](std::size_t i) { out[i] = compute_all(slices[i], config); });
  return out;
}

namespace {

template <typename T>
std::string opt_field(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_same_v<T, int>) {
    return std::to_string(*v);
  } else {
    return csv::format_number(*v);
  }
}

}  // namespace

std::string serialize_measures(const std::vector<CrashMeasures>& measures) {
  std::map<FirmYear, const CrashMeasures*> index;
  for (const auto& m : measures) index[{m.firm_id, m.year}] = &m;

  csv::Writer w({"firm_id", "year", "n_weeks", "n_up", "n_down", "ret", "sigma", "negoutlier", "crash", "ncskew",
                 "duvol", "negoutlier_reason", "crash_reason", "ncskew_reason", "duvol_reason", "negoutlier_lead",
                 "crash_lead", "ncskew_lead", "duvol_lead"});
  for (const auto& [key, m] : index) {
    auto next = index.find({key.firm_id, key.year + 1});
    const CrashMeasures* lead = next == index.end() ? nullptr : next->second;
    w.row({m->firm_id, std::to_string(m->year), std::to_string(m->n_weeks), std::to_string(m->n_up),
           std::to_string(m->n_down), csv::format_number(m->ret), csv::format_number(m->sigma),
           opt_field(m->negoutlier), opt_field(m->crash), opt_field(m->ncskew), opt_field(m->duvol),
           m->negoutlier_reason, m->crash_reason, m->ncskew_reason, m->duvol_reason,
           lead ? opt_field(lead->negoutlier) : "", lead ? opt_field(lead->crash) : "",
           lead ? opt_field(lead->ncskew) : "", lead ? opt_field(lead->duvol) : ""});
  }
  return w.str();
}

std::vector<CrashMeasures> parse_measures(std::string_view text) {
  const csv::Table table = csv::parse(text);
  auto col = [&](const char* name) {
    auto c = table.column(name);
    if (!c) throw SchemaError(std::string("measures table: missing column ") + name);
    return *c;
  };
  const std::size_t cf = col("firm_id"), cy = col("year"), cn = col("n_weeks"), cu = col("n_up"),
                    cd = col("n_down"), cr = col("ret"), cs = col("sigma"), cneg = col("negoutlier"),
                    ccr = col("crash"), cnc = col("ncskew"), cdu = col("duvol"), rneg = col("negoutlier_reason"),
                    rcr = col("crash_reason"), rnc = col("ncskew_reason"), rdu = col("duvol_reason");
  std::vector<CrashMeasures> out;
  for (const auto& row : table.rows) {
    if (row.size() < table.header.size()) throw DataError("measures table: short row");
    CrashMeasures m;
    m.firm_id = row[cf];
    m.year = static_cast<int>(csv::parse_integer(row[cy]).value_or(0));
    m.n_weeks = static_cast<std::size_t>(csv::parse_integer(row[cn]).value_or(0));
    m.n_up = static_cast<std::size_t>(csv::parse_integer(row[cu]).value_or(0));
    m.n_down = static_cast<std::size_t>(csv::parse_integer(row[cd]).value_or(0));
    m.ret = csv::parse_number(row[cr]).value_or(std::nan(""));
    m.sigma = csv::parse_number(row[cs]).value_or(std::nan(""));
    if (auto v = csv::parse_integer(row[cneg])) m.negoutlier = static_cast<int>(*v);
    if (auto v = csv::parse_integer(row[ccr])) m.crash = static_cast<int>(*v);
    if (auto v = csv::parse_number(row[cnc])) m.ncskew = *v;
    if (auto v = csv::parse_number(row[cdu])) m.duvol = *v;
    m.negoutlier_reason = row[rneg];
    m.crash_reason = row[rcr];
    m.ncskew_reason = row[rnc];
    m.duvol_reason = row[rdu];
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace crashrisk
