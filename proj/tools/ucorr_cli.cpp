// ucorr command line tool.
//
// Subcommands:
//   compute   dependence coefficient + p-value for a two-column dataset
//   nulldist  empirical null distribution of the coefficient (CSV histogram)
//   power     power study of a coefficient across noise levels (CSV)
//   bench     wall-clock timing of the coefficient across sample sizes (CSV)
//
// Exit codes: 0 success, 2 usage error, 3 input error, 4 validation error.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ucorr/ucorr.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitValidation = 4;

struct CliError : std::runtime_error {
  int exit_code;
  CliError(int code, const std::string& message)
      : std::runtime_error(message), exit_code(code) {}
};

// ----------------------------------------------------------------------------
// Formatting helpers.
// ----------------------------------------------------------------------------

// 17 significant digits: enough for the printed decimal to parse back to the
// exact same double.
std::string fmt_real(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(v));
  return buffer;
}

// ----------------------------------------------------------------------------
// Dataset ingestion.
// ----------------------------------------------------------------------------

struct IngestOptions {
  std::string path;
  std::string delimiter = ",";
  bool has_header = false;
  std::int32_t x_col = 1;  // 1-based
  std::int32_t y_col = 2;
};

char resolve_delimiter(const std::string& spec) {
  if (spec == "," || spec == "comma") return ',';
  if (spec == ";" || spec == "semicolon") return ';';
  if (spec == "\t" || spec == "\\t" || spec == "tab") return '\t';
  throw CliError(kExitUsage,
                 "unsupported delimiter '" + spec + "'; use comma, tab, or semicolon");
}

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  for (const char c : line) {
    if (c == delimiter) {
      fields.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

std::optional<double> parse_field(std::string field) {
  const auto first = field.find_first_not_of(" \t\r");
  if (first == std::string::npos) return std::nullopt;
  const auto last = field.find_last_not_of(" \t\r");
  field = field.substr(first, last - first + 1);
  double value = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct Dataset {
  ucorr::RawSample sample;
  std::string digest;  // 64-bit content hash of the raw file bytes
};

Dataset load_dataset(const IngestOptions& opts) {
  std::ifstream file(opts.path, std::ios::binary);
  if (!file) throw CliError(kExitInput, "cannot open input file '" + opts.path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  const std::string bytes = buffer.str();
  const char delimiter = resolve_delimiter(opts.delimiter);

  if (opts.x_col < 1 || opts.y_col < 1) {
    throw CliError(kExitUsage, "column indices are 1-based");
  }
  const auto x_idx = static_cast<std::size_t>(opts.x_col - 1);
  const auto y_idx = static_cast<std::size_t>(opts.y_col - 1);

  std::vector<double> xs;
  std::vector<double> ys;
  std::istringstream stream(bytes);
  std::string line;
  std::int64_t line_no = 0;
  bool first_content_row = true;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;  // blank

    const std::vector<std::string> fields = split_fields(line, delimiter);
    if (x_idx >= fields.size() || y_idx >= fields.size()) {
      throw CliError(kExitInput, "line " + std::to_string(line_no) +
                                     ": expected at least " +
                                     std::to_string(std::max(opts.x_col, opts.y_col)) +
                                     " columns, found " +
                                     std::to_string(fields.size()));
    }
    const std::optional<double> x = parse_field(fields[x_idx]);
    const std::optional<double> y = parse_field(fields[y_idx]);

    if (first_content_row) {
      first_content_row = false;
      if (opts.has_header) continue;  // explicit header row
      if (!x && !y) continue;         // unambiguous header: both non-numeric
      if (static_cast<bool>(x) != static_cast<bool>(y)) {
        throw CliError(kExitInput,
                       "line " + std::to_string(line_no) +
                           ": cannot tell whether the first row is a header "
                           "(one field numeric, one not); pass --has-header "
                           "or fix the row");
      }
    }
    if (!x || !y) {
      throw CliError(kExitInput, "line " + std::to_string(line_no) +
                                     ": non-numeric or non-finite value");
    }
    xs.push_back(*x);
    ys.push_back(*y);
  }

  if (xs.size() < 10) {
    throw CliError(kExitValidation,
                   "dataset has " + std::to_string(xs.size()) +
                       " usable rows; the coefficient needs at least 10 (the "
                       "normal null approximation requires n and m above 8)");
  }
  Dataset data;
  data.sample = ucorr::make_raw_sample(std::move(xs), std::move(ys));
  data.digest = hex64(fnv1a64(bytes));
  return data;
}

// ----------------------------------------------------------------------------
// Grid / list parsing for study subcommands.
// ----------------------------------------------------------------------------

// "a:b:c" expands to a, a+c, ... up to b inclusive; otherwise a comma list.
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> values;
  const auto parse_one = [](const std::string& token) {
    const std::optional<double> v = parse_field(token);
    if (!v) throw CliError(kExitUsage, "cannot parse number '" + token + "'");
    return *v;
  };
  if (spec.find(':') != std::string::npos) {
    const std::vector<std::string> parts = split_fields(spec, ':');
    if (parts.size() != 3) {
      throw CliError(kExitUsage, "grid '" + spec + "' must be start:stop:step");
    }
    const double start = parse_one(parts[0]);
    const double stop = parse_one(parts[1]);
    const double step = parse_one(parts[2]);
    if (step <= 0 || stop < start) {
      throw CliError(kExitUsage, "grid '" + spec + "' must have step > 0, stop >= start");
    }
    for (double v = start; v <= stop + 1e-9; v += step) values.push_back(v);
    return values;
  }
  for (const std::string& token : split_fields(spec, ',')) {
    values.push_back(parse_one(token));
  }
  if (values.empty()) throw CliError(kExitUsage, "empty grid '" + spec + "'");
  return values;
}

// ----------------------------------------------------------------------------
// Report emission.
// ----------------------------------------------------------------------------

struct ComputeOptions {
  IngestOptions ingest;
  ucorr::ForestConfig forest;
  double k_bias = 0.5;
  std::string pvalue = "analytic";
  std::int32_t permutations = 199;
  std::string format = "json";
};

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw CliError(kExitInput, "cannot open output file '" + path + "'");
  return file;
}

void emit_compute_report(std::ostream& out, const ComputeOptions& opts,
                         const ucorr::TestResult& result, const std::string& digest,
                         std::int64_t parse_ms, std::int64_t compute_ms) {
  const char* method =
      result.method == ucorr::TestMethod::Analytic ? "analytic" : "permutation";
  const ucorr::ForestConfig& cfg = result.config;
  const std::int64_t elapsed = parse_ms + compute_ms;

  if (opts.format == "json") {
    out << "{\n";
    out << "  \"rho\": " << fmt_real(result.rho) << ",\n";
    out << "  \"sigma0\": " << fmt_real(result.sigma0) << ",\n";
    out << "  \"z\": " << fmt_real(result.z) << ",\n";
    out << "  \"p_value\": " << fmt_real(result.p_value) << ",\n";
    out << "  \"n\": " << result.n << ",\n";
    out << "  \"m\": " << result.m << ",\n";
    out << "  \"method\": \"" << method << "\",\n";
    out << "  \"config\": {\n";
    out << "    \"trees\": " << cfg.tree_count << ",\n";
    out << "    \"m\": " << cfg.m << ",\n";
    out << "    \"leaves\": " << cfg.max_leaf_count << ",\n";
    out << "    \"min_leaf_width\": " << cfg.min_leaf_width << ",\n";
    out << "    \"split_trials\": " << cfg.split_trials << ",\n";
    out << "    \"random_split_fraction\": " << fmt_real(cfg.random_split_fraction)
        << ",\n";
    out << "    \"k_bias\": " << fmt_real(result.k_bias) << ",\n";
    out << "    \"seed\": " << cfg.seed << ",\n";
    out << "    \"threads\": " << cfg.threads << ",\n";
    out << "    \"pvalue\": \"" << method << "\",\n";
    out << "    \"permutations\": "
        << (result.method == ucorr::TestMethod::Permutation ? opts.permutations : 0)
        << ",\n";
    out << "    \"input\": \"" << json_escape(opts.ingest.path) << "\",\n";
    out << "    \"delimiter\": \"" << json_escape(opts.ingest.delimiter) << "\",\n";
    out << "    \"x_col\": " << opts.ingest.x_col << ",\n";
    out << "    \"y_col\": " << opts.ingest.y_col << ",\n";
    out << "    \"has_header\": " << (opts.ingest.has_header ? "true" : "false")
        << "\n";
    out << "  },\n";
    out << "  \"input_digest\": \"" << digest << "\",\n";
    out << "  \"elapsed_ms\": " << elapsed << ",\n";
    out << "  \"version\": \"" << ucorr::kVersion << "\",\n";
    out << "  \"timings\": {\"parse_ms\": " << parse_ms << ", \"compute_ms\": "
        << compute_ms << "}\n";
    out << "}\n";
    return;
  }

  out << "rho,sigma0,z,p_value,n,m,method,input_digest,elapsed_ms,version,"
         "trees,leaves,min_leaf_width,split_trials,random_split_fraction,"
         "k_bias,seed,threads,permutations\n";
  out << fmt_real(result.rho) << ',' << fmt_real(result.sigma0) << ','
      << fmt_real(result.z) << ',' << fmt_real(result.p_value) << ',' << result.n
      << ',' << result.m << ',' << method << ',' << digest << ',' << elapsed << ','
      << ucorr::kVersion << ',' << cfg.tree_count << ',' << cfg.max_leaf_count << ','
      << cfg.min_leaf_width << ',' << cfg.split_trials << ','
      << fmt_real(cfg.random_split_fraction) << ',' << fmt_real(result.k_bias) << ','
      << cfg.seed << ',' << cfg.threads << ','
      << (result.method == ucorr::TestMethod::Permutation ? opts.permutations : 0)
      << '\n';
}

// ----------------------------------------------------------------------------
// Subcommand bodies.
// ----------------------------------------------------------------------------

int run_compute(const ComputeOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = load_dataset(opts.ingest);
  const auto t1 = std::chrono::steady_clock::now();

  ucorr::TestResult result;
  try {
    if (opts.pvalue == "analytic") {
      result = ucorr::analytic_test(data.sample, opts.forest, opts.k_bias);
    } else if (opts.pvalue == "permutation") {
      result = ucorr::permutation_test(data.sample, opts.forest, opts.permutations,
                                       opts.k_bias);
    } else {
      throw CliError(kExitUsage,
                     "unknown p-value method '" + opts.pvalue +
                         "'; use analytic or permutation");
    }
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitValidation, e.what());
  }
  const auto t2 = std::chrono::steady_clock::now();

  const auto ms = [](auto a, auto b) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(b - a).count();
  };
  emit_compute_report(std::cout, opts, result, data.digest, ms(t0, t1), ms(t1, t2));
  return 0;
}

struct NullDistOptions {
  std::int32_t n = 0;
  std::int64_t m = 0;
  std::int32_t reps = 0;
  std::int32_t bins = 40;
  ucorr::ForestConfig forest;
  double k_bias = 0.5;
  std::string output;
};

int run_nulldist(const NullDistOptions& opts) {
  std::int64_t m = opts.m;
  if (m == 0) {
    m = std::min<std::int64_t>(2000, static_cast<std::int64_t>(opts.n) * (opts.n - 1));
  }
  ucorr::NullDistSummary summary;
  try {
    summary = ucorr::null_dist_experiment(opts.n, m, opts.reps, opts.forest.seed,
                                          opts.bins, opts.forest, opts.k_bias);
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitValidation, e.what());
  }

  std::ofstream file;
  std::ostream& out = open_output(file, opts.output);
  out << "bin_lo,bin_hi,count,density,normal_pdf,mean,std,sigma0,reps,n,m\n";
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  for (std::size_t b = 0; b < summary.bin_counts.size(); ++b) {
    const double lo = summary.bin_edges[b];
    const double hi = summary.bin_edges[b + 1];
    const double width = hi - lo;
    const double center = 0.5 * (lo + hi);
    const double density =
        width > 0 ? static_cast<double>(summary.bin_counts[b]) /
                        (static_cast<double>(summary.reps) * width)
                  : 0.0;
    const double zval = center / summary.sigma_predicted;
    const double normal_pdf =
        kInvSqrt2Pi / summary.sigma_predicted * std::exp(-0.5 * zval * zval);
    out << fmt_real(lo) << ',' << fmt_real(hi) << ',' << summary.bin_counts[b] << ','
        << fmt_real(density) << ',' << fmt_real(normal_pdf) << ','
        << fmt_real(summary.mean) << ',' << fmt_real(summary.stddev) << ','
        << fmt_real(summary.sigma_predicted) << ',' << summary.reps << ','
        << summary.n << ',' << summary.m << '\n';
  }
  return 0;
}

struct PowerOptions {
  std::string relation;
  std::string coeffs = "ucorr";
  std::string noise = "0";
  std::int32_t reps = 0;
  std::int32_t n = 0;
  ucorr::ForestConfig forest;
  std::string output;
};

int run_power(const PowerOptions& opts) {
  ucorr::RelationshipKind kind;
  std::vector<ucorr::Coefficient> coefficients;
  try {
    kind = ucorr::parse_relationship(opts.relation);
    for (const std::string& token : split_fields(opts.coeffs, ',')) {
      coefficients.push_back(ucorr::parse_coefficient(token));
    }
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitUsage, e.what());
  }
  const std::vector<double> noise_grid = parse_grid(opts.noise);

  std::ofstream file;
  std::ostream& out = open_output(file, opts.output);
  out << "relation,noise,coefficient,n,reps,power,null_q95\n";
  for (const ucorr::Coefficient coeff : coefficients) {
    std::vector<ucorr::PowerPoint> points;
    try {
      points = ucorr::power_experiment(kind, opts.n, noise_grid, opts.reps, coeff,
                                       opts.forest, opts.forest.seed);
    } catch (const std::invalid_argument& e) {
      throw CliError(kExitValidation, e.what());
    }
    for (const ucorr::PowerPoint& point : points) {
      out << ucorr::relationship_name(point.kind) << ',' << fmt_real(point.noise)
          << ',' << ucorr::coefficient_name(point.coeff) << ',' << opts.n << ','
          << point.reps << ',' << fmt_real(point.power) << ','
          << fmt_real(point.null_q95) << '\n';
    }
  }
  return 0;
}

struct BenchOptions {
  std::vector<std::int64_t> sizes;
  std::int32_t repeats = 1;
  ucorr::ForestConfig forest;
  std::string output;
};

int run_bench(const BenchOptions& opts) {
  if (opts.sizes.empty()) throw CliError(kExitUsage, "--n needs at least one size");
  if (opts.repeats < 1) throw CliError(kExitUsage, "--repeats must be positive");
  std::vector<std::int64_t> sizes = opts.sizes;
  std::sort(sizes.begin(), sizes.end());

  std::ofstream file;
  std::ostream& out = open_output(file, opts.output);
  out << "n,elapsed_ms\n";
  for (const std::int64_t n : sizes) {
    if (n < 10) throw CliError(kExitValidation, "bench sizes must be at least 10");
    const ucorr::RawSample data =
        ucorr::generate({ucorr::RelationshipKind::Independent,
                         static_cast<std::int32_t>(n), 0.0, opts.forest.seed});
    double best_ms = 0.0;
    for (std::int32_t rep = 0; rep < opts.repeats; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      ucorr::ucorr(data, opts.forest);
      const auto stop = std::chrono::steady_clock::now();
      const double ms =
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(
              stop - start)
              .count();
      if (rep == 0 || ms < best_ms) best_ms = ms;
    }
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.3f", best_ms);
    out << n << ',' << buffer << '\n';
  }
  return 0;
}

void add_forest_flags(CLI::App* cmd, ucorr::ForestConfig& forest) {
  cmd->add_option("--trees", forest.tree_count, "Number of trees in the ensemble");
  cmd->add_option("--random-split-fraction", forest.random_split_fraction,
                  "Leading fraction of trees grown with semi-random splits");
  cmd->add_option("--seed", forest.seed, "Master random seed");
  cmd->add_option("--threads", forest.threads,
                  "Worker threads (0 = all cores); never changes results");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ucorr: tree-ensemble dependence coefficient"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ucorr::kVersion);

  ComputeOptions compute;
  CLI::App* cmd_compute =
      app.add_subcommand("compute", "Dependence coefficient and p-value for a dataset");
  cmd_compute->add_option("--input", compute.ingest.path, "Input CSV file")
      ->required();
  cmd_compute->add_option("--delimiter", compute.ingest.delimiter,
                          "Field delimiter: comma, tab, or semicolon");
  cmd_compute->add_flag("--has-header", compute.ingest.has_header,
                        "Treat the first row as a header");
  cmd_compute->add_option("--x-col", compute.ingest.x_col, "1-based x column");
  cmd_compute->add_option("--y-col", compute.ingest.y_col, "1-based y column");
  cmd_compute->add_option("--m", compute.forest.m,
                          "Permuted pairs (default min(2000, n*(n-1)))");
  cmd_compute->add_option("--leaves", compute.forest.max_leaf_count,
                          "Maximum leaves per tree (default min(ceil(sqrt(n)), 64))");
  cmd_compute->add_option("--min-leaf-width", compute.forest.min_leaf_width,
                          "Minimum rank span of a leaf (default ceil(0.03*n))");
  cmd_compute->add_option("--split-trials", compute.forest.split_trials,
                          "Candidate points per leaf");
  cmd_compute->add_option("--k-bias", compute.k_bias,
                          "Score-correlation inflation in the null variance");
  cmd_compute->add_option("--pvalue", compute.pvalue, "analytic or permutation");
  cmd_compute->add_option("--permutations", compute.permutations,
                          "Replicates for --pvalue permutation");
  cmd_compute->add_option("--format", compute.format, "json or csv");
  add_forest_flags(cmd_compute, compute.forest);

  NullDistOptions nulldist;
  CLI::App* cmd_nulldist = app.add_subcommand(
      "nulldist", "Empirical null distribution on independent data (CSV)");
  cmd_nulldist->add_option("--n", nulldist.n, "Sample size")->required();
  cmd_nulldist->add_option("--m", nulldist.m,
                           "Permuted pairs (default min(2000, n*(n-1)))");
  cmd_nulldist->add_option("--reps", nulldist.reps, "Replicates (at least 200)")
      ->required();
  cmd_nulldist->add_option("--bins", nulldist.bins, "Histogram bins");
  cmd_nulldist->add_option("--k-bias", nulldist.k_bias,
                           "Score-correlation inflation in the null variance");
  cmd_nulldist->add_option("--output", nulldist.output, "Output file (default stdout)");
  add_forest_flags(cmd_nulldist, nulldist.forest);

  PowerOptions power;
  CLI::App* cmd_power =
      app.add_subcommand("power", "Power study across noise levels (CSV)");
  cmd_power->add_option("--relation", power.relation, "Relationship kind")->required();
  cmd_power->add_option("--coeff", power.coeffs,
                        "Comma list of coefficients: ucorr, pearson, spearman");
  cmd_power->add_option("--noise", power.noise,
                        "Noise grid: start:stop:step or comma list (percent)");
  cmd_power->add_option("--reps", power.reps, "Replicates (at least 50)")->required();
  cmd_power->add_option("--n", power.n, "Sample size per replicate")->required();
  cmd_power->add_option("--output", power.output, "Output file (default stdout)");
  add_forest_flags(cmd_power, power.forest);

  BenchOptions bench;
  CLI::App* cmd_bench =
      app.add_subcommand("bench", "Coefficient wall-clock timing across sizes (CSV)");
  cmd_bench->add_option("--n", bench.sizes, "Comma list of sample sizes")
      ->required()
      ->delimiter(',');
  cmd_bench->add_option("--repeats", bench.repeats, "Timing repeats; the best is kept");
  cmd_bench->add_option("--output", bench.output, "Output file (default stdout)");
  add_forest_flags(cmd_bench, bench.forest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (cmd_compute->parsed()) return run_compute(compute);
    if (cmd_nulldist->parsed()) return run_nulldist(nulldist);
    if (cmd_power->parsed()) return run_power(power);
    if (cmd_bench->parsed()) return run_bench(bench);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
