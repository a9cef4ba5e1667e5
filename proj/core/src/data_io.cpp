#include "streamrec/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "streamrec/errors.hpp"

namespace streamrec {
namespace {

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool parse_size(const std::string& s, std::size_t& out) {
  std::int64_t v = 0;
  if (!parse_int64(s, v) || v < 0) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

std::vector<std::string> split_fields(const std::string& line,
                                      const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<RatingEvent> parse_ratings(const std::string& path,
                                       RatingsFormat format,
                                       double rating_min, double rating_max,
                                       ParseStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path);

  const std::string sep = format == RatingsFormat::kMovielensDat ? "::" : "\t";
  std::vector<RatingEvent> events;
  std::size_t malformed = 0, total = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total;
    auto fields = split_fields(line, sep);
    RatingEvent ev;
    bool ok = fields.size() == 4;
    if (ok) {
      ev.user_id = fields[0];
      ev.item_id = fields[1];
      ok = !ev.user_id.empty() && !ev.item_id.empty() &&
           parse_double(fields[2], ev.rating) &&
           parse_int64(fields[3], ev.timestamp) && ev.timestamp >= 0 &&
           ev.rating >= rating_min && ev.rating <= rating_max;
    }
    if (!ok) {
      ++malformed;
      continue;
    }
    events.push_back(std::move(ev));
  }

  if (stats) {
    stats->parsed = events.size();
    stats->malformed = malformed;
  }
  if (total > 0 && double(malformed) > 0.001 * double(total))
    throw DataError("ratings file " + path + ": " + std::to_string(malformed) +
                    " of " + std::to_string(total) +
                    " lines malformed (more than 0.1%)");

  std::stable_sort(events.begin(), events.end(),
                   [](const RatingEvent& a, const RatingEvent& b) {
                     if (a.timestamp != b.timestamp)
                       return a.timestamp < b.timestamp;
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.item_id < b.item_id;
                   });
  return events;
}

ChronoSplit chrono_split(const std::vector<RatingEvent>& events,
                         SplitRatios ratios, SplitMode mode) {
  if (events.empty()) throw DataError("chrono_split: empty event list");
  const double total = ratios.train + ratios.validation + ratios.test;
  if (!(total > 0.0) || ratios.train < 0 || ratios.validation < 0 ||
      ratios.test < 0)
    throw ConfigError("chrono_split: ratios must be non-negative with a positive sum");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].timestamp < events[i - 1].timestamp)
      throw DataError("chrono_split: events not sorted by time");

  const std::size_t n = events.size();
  std::size_t cut1, cut2;
  if (mode == SplitMode::kCount) {
    cut1 = static_cast<std::size_t>(std::floor(ratios.train / total * double(n)));
    cut2 = cut1 + static_cast<std::size_t>(
                      std::floor(ratios.validation / total * double(n)));
  } else {
    const std::int64_t t0 = events.front().timestamp;
    const std::int64_t t1 = events.back().timestamp;
    const double span = double(t1 - t0);
    const double b1 = double(t0) + ratios.train / total * span;
    const double b2 = b1 + ratios.validation / total * span;
    cut1 = std::size_t(std::lower_bound(events.begin(), events.end(), b1,
                                        [](const RatingEvent& e, double t) {
                                          return double(e.timestamp) <= t;
                                        }) -
                       events.begin());
    cut2 = std::size_t(std::lower_bound(events.begin(), events.end(), b2,
                                        [](const RatingEvent& e, double t) {
                                          return double(e.timestamp) <= t;
                                        }) -
                       events.begin());
  }
  // Keep runs of equal timestamps in the earlier segment.
  auto extend = [&](std::size_t cut) {
    while (cut > 0 && cut < n && events[cut].timestamp == events[cut - 1].timestamp)
      ++cut;
    return cut;
  };
  cut1 = extend(cut1);
  cut2 = extend(std::max(cut1, cut2));

  ChronoSplit out;
  out.train.assign(events.begin(), events.begin() + cut1);
  out.validation.assign(events.begin() + cut1, events.begin() + cut2);
  out.test.assign(events.begin() + cut2, events.end());
  return out;
}

RatingsFormat RunConfig::format_enum() const {
  if (format == "tsv") return RatingsFormat::kTsv;
  if (format == "movielens-dat") return RatingsFormat::kMovielensDat;
  throw ConfigError("unknown ratings format: " + format);
}

SplitMode RunConfig::split_mode_enum() const {
  if (split_mode == "count") return SplitMode::kCount;
  if (split_mode == "time") return SplitMode::kTime;
  throw ConfigError("unknown split_mode: " + split_mode);
}

std::int64_t RunConfig::granularity_seconds() const {
  return std::max<std::int64_t>(
      1, std::llround(granularity_weeks * kSecondsPerWeek));
}

double RunConfig::lambda_u_seconds() const {
  return lambda_u_weeks * kSecondsPerWeek;
}

double RunConfig::lambda_v_seconds() const {
  return lambda_v_weeks * kSecondsPerWeek;
}

std::size_t RunConfig::truncation_steps() const {
  return std::max<std::size_t>(
      1, std::size_t(std::llround(truncation_weeks / granularity_weeks)));
}

namespace {

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") { out = true; return true; }
  if (v == "false" || v == "0") { out = false; return true; }
  return false;
}

}  // namespace

void RunConfig::set_key(const std::string& key, const std::string& value) {
  auto bad = [&]() {
    throw ConfigError("config: cannot parse value '" + value + "' for key '" +
                      key + "'");
  };
  auto as_double = [&]() {
    double d;
    if (!parse_double(value, d)) bad();
    return d;
  };
  auto as_size = [&]() {
    std::size_t s;
    if (!parse_size(value, s)) bad();
    return s;
  };
  auto as_u64 = [&]() {
    std::int64_t v;
    if (!parse_int64(value, v) || v < 0) bad();
    return static_cast<std::uint64_t>(v);
  };
  auto as_bool = [&]() {
    bool b;
    if (!parse_bool(value, b)) bad();
    return b;
  };

  if (key == "dataset") dataset = value;
  else if (key == "format") format = value;
  else if (key == "rating_min") rating_min = as_double();
  else if (key == "rating_max") rating_max = as_double();
  else if (key == "granularity_weeks") granularity_weeks = as_double();
  else if (key == "split_train") split_train = as_double();
  else if (key == "split_validation") split_validation = as_double();
  else if (key == "split_test") split_test = as_double();
  else if (key == "split_mode") split_mode = value;
  else if (key == "d_s") d_s = as_size();
  else if (key == "d_emb") d_emb = as_size();
  else if (key == "d_h") d_h = as_size();
  else if (key == "mlp_hidden") mlp_hidden = as_size();
  else if (key == "lambda_u_weeks") lambda_u_weeks = as_double();
  else if (key == "lambda_v_weeks") lambda_v_weeks = as_double();
  else if (key == "sigma_u") sigma_u = as_double();
  else if (key == "sigma_v") sigma_v = as_double();
  else if (key == "learning_rate") learning_rate = as_double();
  else if (key == "epochs") epochs = as_size();
  else if (key == "truncation_weeks") truncation_weeks = as_double();
  else if (key == "train_iters") train_iters = as_size();
  else if (key == "test_iters") test_iters = as_size();
  else if (key == "seed") seed = as_u64();
  else if (key == "decay_sign") {
    if (value == "-1") decay_sign = -1;
    else if (value == "1" || value == "+1") decay_sign = 1;
    else bad();
  }
  else if (key == "stop_prior_grad") stop_prior_grad = as_bool();
  else if (key == "dynamics_off") dynamics_off = as_bool();
  else if (key == "record_factors") record_factors = as_bool();
  else if (key == "init_mlp_zero") init_mlp_zero = as_bool();
  else if (key == "optimizer") optimizer = value;
  else if (key == "eval_warmup") eval_warmup = value;
  else if (key == "b0") b0 = value;
  else if (key == "synth_users") synth_users = as_size();
  else if (key == "synth_items") synth_items = as_size();
  else if (key == "synth_steps") synth_steps = as_size();
  else if (key == "synth_events") synth_events = as_size();
  else if (key == "synth_granularity_weeks") synth_granularity_weeks = as_double();
  else if (key == "synth_d_s") synth_d_s = as_size();
  else if (key == "synth_sigma_u") synth_sigma_u = as_double();
  else if (key == "synth_drift_var") synth_drift_var = as_double();
  else if (key == "synth_env_var") synth_env_var = as_double();
  else if (key == "synth_b0") synth_b0 = as_double();
  else if (key == "synth_zero_variance") synth_zero_variance = as_bool();
  else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  auto need_pos = [](double v, const char* name) {
    if (!(v > 0.0))
      throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  need_pos(granularity_weeks, "granularity_weeks");
  need_pos(double(d_s), "d_s");
  need_pos(double(d_emb), "d_emb");
  need_pos(double(d_h), "d_h");
  need_pos(double(mlp_hidden), "mlp_hidden");
  need_pos(lambda_u_weeks, "lambda_u_weeks");
  need_pos(lambda_v_weeks, "lambda_v_weeks");
  need_pos(sigma_u, "sigma_u");
  need_pos(sigma_v, "sigma_v");
  need_pos(learning_rate, "learning_rate");
  need_pos(truncation_weeks, "truncation_weeks");
  need_pos(synth_granularity_weeks, "synth_granularity_weeks");
  need_pos(double(synth_d_s), "synth_d_s");
  need_pos(synth_sigma_u, "synth_sigma_u");
  if (synth_drift_var < 0 || synth_env_var < 0)
    throw ConfigError("config: synth variances must be non-negative");
  if (rating_max <= rating_min)
    throw ConfigError("config: rating_max must exceed rating_min");
  const double total = split_train + split_validation + split_test;
  if (!(total > 0) || split_train < 0 || split_validation < 0 || split_test < 0)
    throw ConfigError("config: split ratios must be non-negative with a positive sum");
  if (format != "tsv" && format != "movielens-dat")
    throw ConfigError("config: unknown format '" + format + "'");
  if (split_mode != "count" && split_mode != "time")
    throw ConfigError("config: unknown split_mode '" + split_mode + "'");
  if (optimizer != "adam" && optimizer != "sgd")
    throw ConfigError("config: unknown optimizer '" + optimizer + "'");
  if (eval_warmup != "validation" && eval_warmup != "none")
    throw ConfigError("config: unknown eval_warmup '" + eval_warmup + "'");
  if (b0 != "auto") {
    double d;
    if (!parse_double(b0, d))
      throw ConfigError("config: b0 must be 'auto' or a number");
  }
}

std::string RunConfig::serialize() const {
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "dataset = " << dataset << "\n";
  os << "format = " << format << "\n";
  os << "rating_min = " << fmt(rating_min) << "\n";
  os << "rating_max = " << fmt(rating_max) << "\n";
  os << "granularity_weeks = " << fmt(granularity_weeks) << "\n";
  os << "split_train = " << fmt(split_train) << "\n";
  os << "split_validation = " << fmt(split_validation) << "\n";
  os << "split_test = " << fmt(split_test) << "\n";
  os << "split_mode = " << split_mode << "\n";
  os << "d_s = " << d_s << "\n";
  os << "d_emb = " << d_emb << "\n";
  os << "d_h = " << d_h << "\n";
  os << "mlp_hidden = " << mlp_hidden << "\n";
  os << "lambda_u_weeks = " << fmt(lambda_u_weeks) << "\n";
  os << "lambda_v_weeks = " << fmt(lambda_v_weeks) << "\n";
  os << "sigma_u = " << fmt(sigma_u) << "\n";
  os << "sigma_v = " << fmt(sigma_v) << "\n";
  os << "learning_rate = " << fmt(learning_rate) << "\n";
  os << "epochs = " << epochs << "\n";
  os << "truncation_weeks = " << fmt(truncation_weeks) << "\n";
  os << "train_iters = " << train_iters << "\n";
  os << "test_iters = " << test_iters << "\n";
  os << "seed = " << seed << "\n";
  os << "decay_sign = " << decay_sign << "\n";
  os << "stop_prior_grad = " << (stop_prior_grad ? "true" : "false") << "\n";
  os << "dynamics_off = " << (dynamics_off ? "true" : "false") << "\n";
  os << "record_factors = " << (record_factors ? "true" : "false") << "\n";
  os << "init_mlp_zero = " << (init_mlp_zero ? "true" : "false") << "\n";
  os << "optimizer = " << optimizer << "\n";
  os << "eval_warmup = " << eval_warmup << "\n";
  os << "b0 = " << b0 << "\n";
  os << "synth_users = " << synth_users << "\n";
  os << "synth_items = " << synth_items << "\n";
  os << "synth_steps = " << synth_steps << "\n";
  os << "synth_events = " << synth_events << "\n";
  os << "synth_granularity_weeks = " << fmt(synth_granularity_weeks) << "\n";
  os << "synth_d_s = " << synth_d_s << "\n";
  os << "synth_sigma_u = " << fmt(synth_sigma_u) << "\n";
  os << "synth_drift_var = " << fmt(synth_drift_var) << "\n";
  os << "synth_env_var = " << fmt(synth_env_var) << "\n";
  os << "synth_b0 = " << fmt(synth_b0) << "\n";
  os << "synth_zero_variance = " << (synth_zero_variance ? "true" : "false")
     << "\n";
  return os.str();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    cfg.set_key(key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace streamrec
