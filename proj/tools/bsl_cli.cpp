// bsl: simulate | discover | assimilate | evaluate

#include "run_config_schema.hpp"
#include "schema_check.hpp"

#include "bsl/bayes_ado.hpp"
#include "bsl/enkf.hpp"
#include "bsl/errors.hpp"
#include "bsl/metrics.hpp"
#include "bsl/system_zoo.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bsl;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------------------------
// Output helpers

/// Round to 12 significant digits so reports are stable across platforms.
double r12(double x) {
    if (!std::isfinite(x)) return x;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::strtod(buf, nullptr);
}

json num(double x) { return std::isfinite(x) ? json(r12(x)) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string git_blob_sha1(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1)
        throw NumericalError("SHA-1 digest failed");
    std::string hex;
    char b[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(b, sizeof b, "%02x", md[i]);
        hex += b;
    }
    return hex;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Files written by a command, hashed into the provenance record.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw ConfigError("cannot create output directory " + dir_.string());
    }

    void write(const std::string& name, const std::string& content) {
        const fs::path p = dir_ / name;
        std::ofstream os(p, std::ios::binary);
        os << content;
        if (!os) throw ConfigError("cannot write " + p.string());
        hashes_[name] = git_blob_sha1(content);
    }

    void record(const std::string& name) { hashes_[name] = git_blob_sha1(read_file(dir_ / name)); }

    [[nodiscard]] const fs::path& dir() const { return dir_; }
    [[nodiscard]] json hashes() const { return json(hashes_); }

private:
    fs::path dir_;
    std::map<std::string, std::string> hashes_;
};

// ---------------------------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    json raw;
    std::string benchmark;
    std::string dataset;
    std::map<std::string, double> params;
    double noise = 0.0;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    std::string output = "bsl_out";
    bool deterministic = false;
    ado::Schedule schedule = ado::Schedule::Full;
    int samples = 1000;
    int members = 100;
    bool svg = false;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

RunConfig resolve(json raw) {
    static const json schema = json::parse(bsl_cli::kRunConfigSchema);
    const auto errors = cli::schema_errors(schema, raw);
    if (!errors.empty()) {
        std::string msg = "config does not match the run schema:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    RunConfig c;
    c.raw = raw;
    c.benchmark = raw.value("benchmark", "");
    c.dataset = raw.value("dataset", "");
    if (raw.contains("params"))
        for (const auto& [k, v] : raw["params"].items()) c.params[k] = v.get<double>();
    c.noise = raw.value("noise", 0.0);
    c.fraction = raw.value("fraction", 1.0);
    c.seed = raw.value("seed", std::uint64_t{0});
    c.output = raw.value("output", std::string("bsl_out"));
    c.deterministic = raw.value("deterministic", false);
    c.schedule = raw.value("schedule", std::string("full")) == "desk" ? ado::Schedule::Desk : ado::Schedule::Full;
    if (raw.contains("outputs")) {
        const auto& o = raw["outputs"];
        c.samples = o.value("samples", c.samples);
        c.members = o.value("members", c.members);
        c.svg = o.value("svg", false);
    }
    return c;
}

/// Benchmark context: a registered benchmark, or a generic ODE setup for a user dataset.
zoo::Benchmark make_context(const RunConfig& c, const zoo::Dataset* data) {
    zoo::Benchmark b;
    if (!c.benchmark.empty()) {
        b = zoo::make_benchmark(c.benchmark, c.params);
    } else {
        if (!data) throw ConfigError("a dataset is required when no benchmark is named");
        b.id = "custom";
        b.kind = zoo::ProblemKind::Ode;
        b.num_states = static_cast<int>(data->values.cols());
        b.control = {0};
        b.library = {library::LibrarySpec::Kind::Poly, 3, true, {}, 3, 3, {}};
    }
    const json& raw = c.raw;
    if (raw.contains("library")) {
        if (b.library.kind != library::LibrarySpec::Kind::Poly)
            throw ConfigError("library overrides apply to polynomial (ODE) libraries only");
        b.library.max_degree = raw["library"].value("max_degree", b.library.max_degree);
        b.library.constant = raw["library"].value("constant", b.library.constant);
        b.library.monomials.clear();
    }
    if (raw.contains("spline")) {
        b.spline_degree = raw["spline"].value("degree", b.spline_degree);
        if (raw["spline"].contains("control")) b.control = raw["spline"]["control"].get<std::vector<int>>();
    }
    return b;
}

zoo::Dataset load_dataset(const RunConfig& c, const zoo::Benchmark& b) {
    if (!c.dataset.empty()) {
        const int dims = b.kind == zoo::ProblemKind::Ode ? 1 : 2;
        zoo::Dataset d = zoo::read_csv(c.dataset, dims);
        if (c.fraction < 1.0) zoo::subsample(d, c.fraction, c.seed);
        return d;
    }
    return zoo::make_dataset(b, c.noise, c.seed, c.fraction);
}

ado::Hyperparams make_hyper(const RunConfig& c, const zoo::Benchmark& b) {
    ado::Hyperparams h = ado::default_hyperparams(b.id, c.schedule);
    h.seed = c.seed;
    h.deterministic = c.deterministic;
    if (c.raw.contains("hyper")) {
        const json& j = c.raw["hyper"];
        auto set = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
        };
        set("ado_iters", h.ado_iters);
        set("ado_epochs", h.ado_epochs);
        set("post_epochs", h.post_epochs);
        set("swag_epochs", h.swag_epochs);
        set("lr", h.lr);
        set("swag_lr", h.swag_lr);
        set("threshold", h.threshold);
        set("normalized_threshold", h.normalized_threshold);
        set("swag_rank", h.swag_rank);
        set("snapshot_every", h.snapshot_every);
        set("collocation_factor", h.collocation_factor);
        set("collocation_margin", h.collocation_margin);
        set("swag_batch_fraction", h.swag_batch_fraction);
        set("init_penalty", h.init_penalty);
        set("init_smooth", h.init_smooth);
        set("initial_prune", h.initial_prune);
        set("a0", h.a0);
        set("b0", h.b0);
        set("a1", h.a1);
        set("b1", h.b1);
        set("b_floor", h.b_floor);
        set("p_floor", h.p_floor);
    }
    h.validate();
    return h;
}

json hyper_json(const ado::Hyperparams& h) {
    return {{"ado_iters", h.ado_iters},
            {"ado_epochs", h.ado_epochs},
            {"post_epochs", h.post_epochs},
            {"swag_epochs", h.swag_epochs},
            {"lr", num(h.lr)},
            {"swag_lr", num(h.swag_lr)},
            {"threshold", num(h.threshold)},
            {"normalized_threshold", h.normalized_threshold},
            {"swag_rank", h.swag_rank},
            {"snapshot_every", h.snapshot_every},
            {"collocation_factor", num(h.collocation_factor)},
            {"collocation_margin", num(h.collocation_margin)},
            {"swag_batch_fraction", num(h.swag_batch_fraction)},
            {"init_penalty", num(h.init_penalty)},
            {"init_smooth", h.init_smooth},
            {"initial_prune", h.initial_prune},
            {"a0", num(h.a0)},
            {"b0", num(h.b0)},
            {"a1", num(h.a1)},
            {"b1", num(h.b1)},
            {"b_floor", num(h.b_floor)},
            {"p_floor", num(h.p_floor)},
            {"deterministic", h.deterministic},
            {"seed", h.seed}};
}

void write_provenance(Outputs& out, const std::string& command, const RunConfig& c, const std::vector<std::string>& argv,
                      double seconds, json extra = json::object()) {
    json p = {{"tool", "bsl"},
              {"version", kVersion},
              {"command", command},
              {"argv", argv},
              {"config", c.raw},
              {"seed", c.seed},
              {"threads", ado::thread_count()},
              {"elapsed_seconds", r12(seconds)},
              {"outputs", out.hashes()}};
    if (!c.dataset.empty()) p["dataset_sha1"] = git_blob_sha1(read_file(c.dataset));
    for (const auto& [k, v] : extra.items()) p[k] = v;
    out.write("provenance.json", p.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------
// Minimal SVG line plots

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color;
    bool dots = false;
};

std::string svg_plot(const std::string& title, const std::vector<Series>& series, const std::vector<Series>& bands = {}) {
    const double W = 720, H = 300, L = 60, R = 20, T = 30, B = 40;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto extent = [&](const Series& s) {
        for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
        for (double v : s.y)
            if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    };
    for (const auto& s : series) extent(s);
    for (const auto& s : bands) extent(s);
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << L << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
       << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << L << "\" y=\"" << H - 20 << "\" font-size=\"11\">" << fmt(x0) << "</text>\n"
       << "<text x=\"" << W - R - 40 << "\" y=\"" << H - 20 << "\" font-size=\"11\">" << fmt(x1) << "</text>\n"
       << "<text x=\"4\" y=\"" << py(y0) << "\" font-size=\"11\">" << fmt(y0) << "</text>\n"
       << "<text x=\"4\" y=\"" << py(y1) + 10 << "\" font-size=\"11\">" << fmt(y1) << "</text>\n";
    // Bands come in lower/upper pairs.
    for (std::size_t i = 0; i + 1 < bands.size(); i += 2) {
        os << "<polygon fill=\"" << bands[i].color << "\" fill-opacity=\"0.3\" stroke=\"none\" points=\"";
        for (std::size_t k = 0; k < bands[i].x.size(); ++k) os << px(bands[i].x[k]) << ',' << py(bands[i].y[k]) << ' ';
        for (std::size_t k = bands[i + 1].x.size(); k-- > 0;)
            os << px(bands[i + 1].x[k]) << ',' << py(bands[i + 1].y[k]) << ' ';
        os << "\"/>\n";
    }
    for (const auto& s : series) {
        if (s.dots) {
            for (std::size_t k = 0; k < s.x.size(); ++k)
                os << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"1.5\" fill=\"" << s.color
                   << "\"/>\n";
            continue;
        }
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k) os << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
        os << "\"/>\n";
    }
    double ly = T + 14;
    for (const auto& s : series) {
        os << "<text x=\"" << W - R - 120 << "\" y=\"" << ly << "\" font-size=\"11\" fill=\"" << s.color << "\">"
           << s.label << "</text>\n";
        ly += 13;
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// Reports

/// Posterior over the active W entries: mean and low-rank factor, enough to redraw samples.
json posterior_json(const ado::DiscoveryResult& res, const std::vector<library::TermDescriptor>& terms) {
    json entries = json::array();
    std::vector<Eigen::Index> offsets;
    const Eigen::MatrixXd& Wm = res.W_mean;
    const ado::Block* wblock = nullptr;
    for (const auto& b : res.packing.blocks())
        if (b.name == "W") wblock = &b;
    Eigen::MatrixXd factor;
    if (res.posterior && wblock) {
        for (std::size_t i = 0; i < res.posterior->blocks.size(); ++i)
            if (res.posterior->blocks[i].name == "W") factor = res.posterior->factors[i];
    }
    json mean = json::array(), fac = json::array();
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < Wm.cols(); ++k)
        for (Eigen::Index j = 0; j < Wm.rows(); ++j) {
            if (!res.state.active(j, k)) continue;
            entries.push_back({{"state", k}, {"term", terms[static_cast<std::size_t>(j)].key()}});
            mean.push_back(num(Wm(j, k)));
            json r = json::array();
            if (factor.rows() > row)
                for (Eigen::Index c = 0; c < factor.cols(); ++c) r.push_back(num(factor(row, c)));
            fac.push_back(r);
            ++row;
        }
    return {{"entries", entries}, {"mean", mean}, {"factor", fac}};
}

struct LoadedPosterior {
    std::vector<std::pair<int, int>> entries;  ///< (term row, state)
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;
};

LoadedPosterior load_posterior(const json& post, const std::vector<library::TermDescriptor>& terms) {
    std::map<std::string, int> index;
    for (std::size_t j = 0; j < terms.size(); ++j) index[terms[j].key()] = static_cast<int>(j);
    LoadedPosterior lp;
    const auto& entries = post.at("entries");
    const auto n = static_cast<Eigen::Index>(entries.size());
    lp.mean.resize(n);
    const std::size_t rank = n ? post.at("factor")[0].size() : 0;
    lp.factor = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(rank));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& e = entries[static_cast<std::size_t>(i)];
        const auto it = index.find(e.at("term").get<std::string>());
        if (it == index.end()) throw ConfigError("report term '" + e.at("term").get<std::string>() + "' is not in the library");
        lp.entries.emplace_back(it->second, e.at("state").get<int>());
        lp.mean(i) = post.at("mean")[static_cast<std::size_t>(i)].get<double>();
        const auto& r = post.at("factor")[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < r.size() && c < rank; ++c) lp.factor(i, static_cast<Eigen::Index>(c)) = r[c].get<double>();
    }
    return lp;
}

std::vector<Eigen::MatrixXd> draw_W(const LoadedPosterior& lp, Eigen::Index terms, Eigen::Index states, int n,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Eigen::MatrixXd> out;
    for (int s = 0; s < n; ++s) {
        Eigen::VectorXd z(lp.factor.cols());
        for (Eigen::Index c = 0; c < z.size(); ++c) z(c) = g(rng);
        const Eigen::VectorXd w = lp.mean + lp.factor * z;
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(terms, states);
        for (std::size_t i = 0; i < lp.entries.size(); ++i)
            W(lp.entries[i].first, lp.entries[i].second) = w(static_cast<Eigen::Index>(i));
        out.push_back(std::move(W));
    }
    return out;
}

Eigen::MatrixXd W_from_report(const json& report, const std::vector<library::TermDescriptor>& terms, int states,
                              const char* field) {
    std::map<std::string, int> index;
    for (std::size_t j = 0; j < terms.size(); ++j) index[terms[j].key()] = static_cast<int>(j);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(terms.size()), states);
    for (const auto& row : report.at("coefficients")) {
        const auto it = index.find(row.at("key").get<std::string>());
        if (it == index.end()) throw ConfigError("report term '" + row.at("key").get<std::string>() + "' is not in the library");
        const auto& v = row.at(field);
        W(it->second, row.at("state").get<int>()) = v.is_null() ? 0.0 : v.get<double>();
    }
    return W;
}

json score_json(const metrics::ScoreCard& s) {
    return {{"rmse", num(s.rmse)}, {"precision", num(s.precision)}, {"recall", num(s.recall)}};
}

// ---------------------------------------------------------------------------------------------
// Commands

struct Common {
    std::string config;
    std::string benchmark;
    std::string dataset;
    std::string output;
    std::optional<double> noise;
    std::optional<double> fraction;
    std::optional<long long> seed;
    std::vector<std::string> params;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "run configuration JSON");
    app->add_option("--benchmark", c.benchmark, "benchmark id");
    app->add_option("--dataset", c.dataset, "dataset CSV");
    app->add_option("--output,-o", c.output, "output directory");
    app->add_option("--noise", c.noise, "noise level relative to each state's standard deviation");
    app->add_option("--fraction", c.fraction, "subsample fraction");
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--param", c.params, "benchmark parameter override key=value (repeatable)");
}

/// Config file merged with flag overrides; leftover `--key value` pairs become benchmark params.
json merged_config(const Common& c, const std::vector<std::string>& extras) {
    json raw = load_config(c.config);
    if (!raw.is_object()) throw ConfigError("config must be a JSON object");
    if (!c.benchmark.empty()) raw["benchmark"] = c.benchmark;
    if (!c.dataset.empty()) raw["dataset"] = c.dataset;
    if (!c.output.empty()) raw["output"] = c.output;
    if (c.noise) raw["noise"] = *c.noise;
    if (c.fraction) raw["fraction"] = *c.fraction;
    if (c.seed) raw["seed"] = *c.seed;
    auto set_param = [&](const std::string& key, const std::string& value) {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            raw["params"][key] = v;
        } catch (const std::exception&) {
            throw ConfigError("parameter '" + key + "' needs a numeric value, got '" + value + "'");
        }
    };
    for (const auto& p : c.params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + p + "'");
        set_param(p.substr(0, eq), p.substr(eq + 1));
    }
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& a = extras[i];
        if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError("unexpected argument '" + a + "'");
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            set_param(a.substr(2, eq - 2), a.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("option " + a + " needs a value");
            set_param(a.substr(2), extras[++i]);
        }
    }
    return raw;
}

int cmd_simulate(const RunConfig& c, const std::vector<std::string>& argv) {
    const auto t0 = std::chrono::steady_clock::now();
    if (c.benchmark.empty()) throw ConfigError("simulate needs a benchmark");
    const zoo::Benchmark b = make_context(c, nullptr);
    Outputs out(c.output);
    const zoo::Dataset clean = zoo::make_dataset(b, 0.0, c.seed, c.fraction);
    const zoo::Dataset noisy = zoo::make_dataset(b, c.noise, c.seed, c.fraction);
    const std::string clean_name = b.id + "_clean.csv";
    const std::string noisy_name = b.id + "_noisy.csv";
    zoo::write_csv(clean, out.dir() / clean_name, false);
    zoo::write_csv(noisy, out.dir() / noisy_name, true);
    out.record(clean_name);
    out.record(noisy_name);
    json params = json::object();
    for (const auto& [k, v] : b.params) params[k] = num(v);
    write_provenance(out, "simulate", c, argv,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                     {{"benchmark_params", params}, {"rows", noisy.values.rows()}, {"states", noisy.values.cols()}});
    std::cerr << "wrote " << (out.dir() / clean_name).string() << " and " << noisy_name << " (" << noisy.values.rows()
              << " rows)\n";
    return 0;
}

int cmd_discover(const RunConfig& c, const std::vector<std::string>& argv) {
    const auto t0 = std::chrono::steady_clock::now();
    zoo::Benchmark b;
    zoo::Dataset data;
    if (!c.dataset.empty() && c.benchmark.empty()) {
        zoo::Dataset tmp = zoo::read_csv(c.dataset, 1);
        b = make_context(c, &tmp);
        data = load_dataset(c, b);
    } else {
        b = make_context(c, nullptr);
        data = load_dataset(c, b);
    }
    const ado::Hyperparams h = make_hyper(c, b);
    const ado::Problem prob = ado::make_problem(b, data, h);
    std::cerr << "discovering " << b.id << ": " << data.values.rows() << " measurements, " << prob.terms.size()
              << " library terms, " << prob.colloc.rows() << " collocation points\n";
    const ado::DiscoveryResult res = ado::ado_train(prob, h);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';

    const library::Naming naming = zoo::naming(b);
    const auto lhs = zoo::lhs_names(b);
    const int d = static_cast<int>(res.W_mean.cols());
    const bool has_truth = b.id != "custom";
    Eigen::MatrixXd truth;
    if (has_truth) truth = zoo::true_coefficients(b, prob.terms);

    Outputs out(c.output);
    json report;
    report["benchmark"] = b.id;
    report["noise"] = num(data.noise_level);
    report["seed"] = c.seed;
    report["config"] = c.raw;
    report["hyper"] = hyper_json(h);
    report["library_size"] = prob.terms.size();
    json coefs = json::array();
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index j = 0; j < res.W_mean.rows(); ++j) {
            const bool active = res.state.active(j, k);
            const bool relevant = active || (has_truth && truth(j, k) != 0);
            if (!relevant) continue;
            json row = {{"state", k},
                        {"term", library::render_term(prob.terms[static_cast<std::size_t>(j)], naming)},
                        {"key", prob.terms[static_cast<std::size_t>(j)].key()},
                        {"active", active},
                        {"mean", num(res.W_mean(j, k))},
                        {"std", num(res.W_std(j, k))}};
            if (has_truth) row["truth"] = num(truth(j, k));
            coefs.push_back(row);
        }
    report["coefficients"] = coefs;
    report["active_count"] = res.state.active_count();
    report["equations"] = library::render_equation(prob.terms, res.W_mean, res.W_std, lhs, naming);
    report["B"] = vec(res.B);
    report["P"] = vec(res.P);
    json hist = json::array();
    for (double l : res.loss_history) hist.push_back(num(l));
    report["loss_history"] = hist;
    json iters = json::array();
    for (const auto& it : res.iterations)
        iters.push_back({{"loss", num(it.loss)}, {"active", it.active}, {"accepted", it.accepted}});
    report["iterations"] = iters;
    report["warnings"] = res.warnings;
    report["posterior"] = posterior_json(res, prob.terms);
    if (has_truth) {
        const auto sc = metrics::score(prob.terms, res.W_mean, truth, res.W_std, naming);
        report["score"] = score_json(sc);
        std::cerr << "rmse " << fmt(sc.rmse) << "  M_P " << fmt(sc.precision) << "  M_R " << fmt(sc.recall) << '\n';
    }
    out.write("report.json", report.dump(2) + "\n");

    std::string eqs;
    for (const auto& e : report["equations"]) eqs += e.get<std::string>() + "\n";
    out.write("equations.txt", eqs);
    std::cerr << eqs;

    std::ostringstream cc;
    cc << "state,term,mean,std" << (has_truth ? ",truth" : "") << '\n';
    for (const auto& row : coefs) {
        cc << row["state"].get<int>() << ',' << row["term"].get<std::string>() << ',' << row["mean"].dump() << ','
           << row["std"].dump();
        if (has_truth) cc << ',' << row["truth"].dump();
        cc << '\n';
    }
    out.write("coefficients.csv", cc.str());

    std::ostringstream lh;
    lh << "iteration,loss,active,accepted\n";
    for (std::size_t i = 0; i < res.iterations.size(); ++i)
        lh << i << ',' << fmt(res.iterations[i].loss) << ',' << res.iterations[i].active << ','
           << (res.iterations[i].accepted ? 1 : 0) << '\n';
    out.write("loss_history.csv", lh.str());

    // Coefficient samples for posterior densities.
    const LoadedPosterior lp = load_posterior(report["posterior"], prob.terms);
    const auto nterms = static_cast<Eigen::Index>(prob.terms.size());
    const auto draws = draw_W(lp, nterms, d, c.deterministic ? 1 : c.samples, c.seed + 1);
    {
        std::ostringstream cs;
        cs << "sample";
        for (const auto& [j, k] : lp.entries)
            cs << ",\"" << lhs[static_cast<std::size_t>(k)] << ":" << library::render_term(prob.terms[static_cast<std::size_t>(j)], naming) << '"';
        cs << '\n';
        for (std::size_t s = 0; s < draws.size(); ++s) {
            cs << s;
            for (const auto& [j, k] : lp.entries) cs << ',' << fmt(draws[s](j, k));
            cs << '\n';
        }
        out.write("coefficient_samples.csv", cs.str());
    }

    // Forward ensemble from the fitted initial state.
    const int members = c.deterministic ? 1 : c.members;
    const auto ens_W = draw_W(lp, nterms, d, members, c.seed + 2);
    if (b.kind == zoo::ProblemKind::Ode) {
        std::vector<double> times(data.coords.col(0).data(), data.coords.col(0).data() + data.coords.rows());
        std::vector<std::size_t> order(times.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t bb) { return times[a] < times[bb]; });
        std::vector<double> sorted;
        for (auto i : order) sorted.push_back(times[i]);
        Eigen::MatrixXd p0(1, 1);
        p0(0, 0) = sorted.front();
        const Eigen::VectorXd u0 =
            (spline::build_basis_matrix(prob.space, p0).values * res.theta_mean).row(0).transpose();
        const double spacing = (sorted.back() - sorted.front()) / std::max<std::size_t>(1, sorted.size() - 1);
        const auto ens = ado::propagate_ode(prob.terms, ens_W, std::vector<Eigen::VectorXd>(ens_W.size(), u0), sorted,
                                            std::min(0.01, spacing));
        if (ens.dropped) std::cerr << "warning: " << ens.dropped << " ensemble members diverged and were dropped\n";
        std::ostringstream eb;
        eb << "time,state,q05,q50,q95,data" << (data.has_truth() ? ",truth" : "") << '\n';
        for (std::size_t i = 0; i < sorted.size() && ens.q50.rows(); ++i)
            for (int k = 0; k < d; ++k) {
                eb << fmt(sorted[i]) << ',' << k << ',' << fmt(ens.q05(static_cast<Eigen::Index>(i), k)) << ','
                   << fmt(ens.q50(static_cast<Eigen::Index>(i), k)) << ',' << fmt(ens.q95(static_cast<Eigen::Index>(i), k))
                   << ',' << fmt(data.values(static_cast<Eigen::Index>(order[i]), k));
                if (data.has_truth()) eb << ',' << fmt(data.truth(static_cast<Eigen::Index>(order[i]), k));
                eb << '\n';
            }
        out.write("ensemble_bands.csv", eb.str());
        if (c.svg && ens.q50.rows()) {
            for (int k = 0; k < d; ++k) {
                Series lo{"q05", sorted, {}, "#4070ff"}, hi{"q95", sorted, {}, "#4070ff"};
                Series med{"ensemble median", sorted, {}, "#2040c0"}, obs{"data", sorted, {}, "#20a040", true};
                Series tru{"truth", sorted, {}, "#d02020"};
                for (std::size_t i = 0; i < sorted.size(); ++i) {
                    const auto r = static_cast<Eigen::Index>(i);
                    lo.y.push_back(ens.q05(r, k));
                    hi.y.push_back(ens.q95(r, k));
                    med.y.push_back(ens.q50(r, k));
                    obs.y.push_back(data.values(static_cast<Eigen::Index>(order[i]), k));
                    if (data.has_truth()) tru.y.push_back(data.truth(static_cast<Eigen::Index>(order[i]), k));
                }
                std::vector<Series> lines{obs, med};
                if (data.has_truth()) lines.push_back(tru);
                out.write("ensemble_" + naming.states[static_cast<std::size_t>(k)] + ".svg",
                          svg_plot(b.id + ": " + naming.states[static_cast<std::size_t>(k)], lines, {lo, hi}));
            }
        }
    } else if (b.kind == zoo::ProblemKind::Evolution && b.periodic) {
        // Uniform periodic x grid of the data; initial field from the fitted spline at the first time.
        std::vector<double> xs(data.coords.col(0).data(), data.coords.col(0).data() + data.coords.rows());
        std::vector<double> ts(data.coords.col(1).data(), data.coords.col(1).data() + data.coords.rows());
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
        const double dx = (b.hi[0] - b.lo[0]) / static_cast<double>(b.grid[0]);
        const int nx = b.grid[0];
        Eigen::MatrixXd pts(nx, 2);
        for (int i = 0; i < nx; ++i) {
            pts(i, 0) = std::clamp(b.lo[0] + i * dx, xs.front(), xs.back());
            pts(i, 1) = ts.front();
        }
        const Eigen::VectorXd f0 = spline::build_basis_matrix(prob.space, pts).values * res.theta_mean.col(0);
        std::vector<Eigen::VectorXd> wcols;
        for (const auto& W : ens_W) wcols.push_back(W.col(0));
        const std::vector<double> snap{ts.front(), 0.5 * (ts.front() + ts.back()), ts.back()};
        const auto ens = ado::propagate_pde(prob.terms, wcols, std::vector<Eigen::VectorXd>(wcols.size(), f0), b.lo[0],
                                            dx, snap);
        if (ens.dropped) std::cerr << "warning: " << ens.dropped << " ensemble members diverged and were dropped\n";
        std::ostringstream fb;
        fb << "time,x,q05,q50,q95\n";
        for (std::size_t i = 0; i < snap.size() && ens.q50.rows(); ++i)
            for (int g = 0; g < nx; ++g)
                fb << fmt(snap[i]) << ',' << fmt(b.lo[0] + g * dx) << ',' << fmt(ens.q05(static_cast<Eigen::Index>(i), g))
                   << ',' << fmt(ens.q50(static_cast<Eigen::Index>(i), g)) << ','
                   << fmt(ens.q95(static_cast<Eigen::Index>(i), g)) << '\n';
        out.write("field_bands.csv", fb.str());
    } else {
        std::cerr << "note: steady problems have no forward propagation; no ensemble bands written\n";
    }

    write_provenance(out, "discover", c, argv,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return 0;
}

json read_report(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

int cmd_assimilate(RunConfig c, const std::string& report_path, std::vector<double> window, double spacing,
                   double horizon, int members, const std::vector<std::string>& argv) {
    const auto t0 = std::chrono::steady_clock::now();
    const json report = read_report(report_path);
    if (c.benchmark.empty() && c.dataset.empty()) {
        // Reuse the discovery configuration.
        json raw = report.at("config");
        for (const auto& [k, v] : c.raw.items()) raw[k] = v;
        c = resolve(raw);
    }
    zoo::Benchmark b;
    zoo::Dataset data;
    if (!c.dataset.empty() && c.benchmark.empty()) {
        zoo::Dataset tmp = zoo::read_csv(c.dataset, 1);
        b = make_context(c, &tmp);
    } else {
        b = make_context(c, nullptr);
    }
    if (b.kind != zoo::ProblemKind::Ode) throw ConfigError("assimilation supports ODE systems only");
    data = load_dataset(c, b);
    const auto terms = library::build_library(b.library, b.num_states, b.spline_degree);
    const int d = b.num_states;

    const json a = c.raw.value("assimilate", json::object());
    if (window.empty() && a.contains("window")) window = a["window"].get<std::vector<double>>();
    if (spacing <= 0) spacing = a.value("spacing", 0.0);
    if (std::isnan(horizon) && a.contains("horizon")) horizon = a["horizon"].get<double>();
    if (members <= 0) members = a.value("members", c.members);
    const double substep = a.value("substep", 0.01);

    // Observations: data rows inside the window at the requested spacing.
    std::vector<std::pair<double, Eigen::Index>> rows;
    for (Eigen::Index i = 0; i < data.coords.rows(); ++i) rows.emplace_back(data.coords(i, 0), i);
    std::sort(rows.begin(), rows.end());
    if (window.empty()) window = {rows.front().first, rows.front().first + 0.3 * (rows.back().first - rows.front().first)};
    if (window.size() != 2 || !(window[1] >= window[0])) throw ConfigError("assimilation window must be [start, end]");
    const double dt = (rows.back().first - rows.front().first) / static_cast<double>(rows.size() - 1);
    const int stride = std::max(1, static_cast<int>(std::lround((spacing > 0 ? spacing : dt) / dt)));
    enkf::AssimilationConfig cfg;
    std::vector<Eigen::Index> obs_rows;
    std::size_t start = 0;
    while (start < rows.size() && rows[start].first < window[0] - 1e-12) ++start;
    for (std::size_t i = start; i < rows.size() && rows[i].first <= window[1] + 1e-12; i += static_cast<std::size_t>(stride)) {
        cfg.obs_times.push_back(rows.front().first + static_cast<double>(i) * dt);
        obs_rows.push_back(rows[i].second);
    }
    if (cfg.obs_times.empty()) throw ConfigError("no observations fall inside the assimilation window");
    cfg.obs.resize(static_cast<Eigen::Index>(obs_rows.size()), d);
    for (std::size_t i = 0; i < obs_rows.size(); ++i) cfg.obs.row(static_cast<Eigen::Index>(i)) = data.values.row(obs_rows[i]);
    cfg.op.B = Eigen::Map<const Eigen::VectorXd>(report.at("B").get<std::vector<double>>().data(), d);
    cfg.P = Eigen::Map<const Eigen::VectorXd>(report.at("P").get<std::vector<double>>().data(), d);
    cfg.horizon = std::isnan(horizon) ? rows.back().first : horizon;
    cfg.interval = stride * dt;
    cfg.substep = substep;
    cfg.seed = c.seed;

    const LoadedPosterior lp = load_posterior(report.at("posterior"), terms);
    const auto Ws = draw_W(lp, static_cast<Eigen::Index>(terms.size()), d, members, c.seed + 3);
    enkf::Ensemble e;
    std::mt19937_64 rng(c.seed + 4);
    std::normal_distribution<double> g;
    for (int j = 0; j < members; ++j) {
        Eigen::VectorXd u = cfg.obs.row(0).transpose();
        for (int k = 0; k < d; ++k) u(k) += std::sqrt(cfg.op.B(k)) * g(rng);
        e.members.push_back(u);
        e.weights.push_back(Ws[static_cast<std::size_t>(j)]);
    }
    std::cerr << "assimilating " << cfg.obs_times.size() << " observations in [" << fmt(window[0]) << ", "
              << fmt(window[1]) << "], " << members << " members, free run to " << fmt(cfg.horizon) << '\n';
    const auto res = enkf::assimilate(e, terms, cfg);
    if (res.reinitialized) std::cerr << "warning: " << res.reinitialized << " member resets after divergence\n";

    // Truth lookup by nearest data time when available.
    auto truth_at = [&](double t) -> std::optional<Eigen::VectorXd> {
        if (!data.has_truth()) return std::nullopt;
        const auto it = std::lower_bound(rows.begin(), rows.end(), std::make_pair(t - 1e-9 * std::max(1.0, std::abs(t)), Eigen::Index{-1}));
        if (it == rows.end() || std::abs(it->first - t) > 0.5 * dt) return std::nullopt;
        return Eigen::VectorXd(data.truth.row(it->second).transpose());
    };

    Outputs out(c.output);
    std::ostringstream bands;
    bands << "time,state,q05,q50,q95,in_window,truth\n";
    for (std::size_t i = 0; i < res.ensemble.times.size(); ++i) {
        const double t = res.ensemble.times[i];
        const auto tr = truth_at(t);
        for (int k = 0; k < d; ++k) {
            const auto r = static_cast<Eigen::Index>(i);
            bands << fmt(t) << ',' << k << ',' << fmt(res.ensemble.q05(r, k)) << ',' << fmt(res.ensemble.q50(r, k)) << ','
                  << fmt(res.ensemble.q95(r, k)) << ',' << (t <= res.window_end + 1e-12 ? 1 : 0) << ','
                  << (tr ? fmt((*tr)(k)) : "") << '\n';
        }
    }
    out.write("assimilation_bands.csv", bands.str());
    std::ostringstream mem;
    mem << "member,time";
    for (int k = 0; k < d; ++k) mem << ",u" << k + 1;
    mem << '\n';
    for (std::size_t j = 0; j < res.ensemble.members.size(); ++j)
        for (std::size_t i = 0; i < res.ensemble.times.size(); ++i) {
            mem << j << ',' << fmt(res.ensemble.times[i]);
            for (int k = 0; k < d; ++k) mem << ',' << fmt(res.ensemble.members[j](static_cast<Eigen::Index>(i), k));
            mem << '\n';
        }
    out.write("assimilation_members.csv", mem.str());
    if (c.svg) {
        const auto naming = zoo::naming(b);
        for (int k = 0; k < d; ++k) {
            Series lo{"q05", res.ensemble.times, {}, "#4070ff"}, hi{"q95", res.ensemble.times, {}, "#4070ff"};
            Series med{"ensemble median", res.ensemble.times, {}, "#2040c0"};
            Series tru{"truth", {}, {}, "#d02020"}, obs{"observations", cfg.obs_times, {}, "#20a040", true};
            for (std::size_t i = 0; i < res.ensemble.times.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                lo.y.push_back(res.ensemble.q05(r, k));
                hi.y.push_back(res.ensemble.q95(r, k));
                med.y.push_back(res.ensemble.q50(r, k));
                if (const auto tr = truth_at(res.ensemble.times[i])) {
                    tru.x.push_back(res.ensemble.times[i]);
                    tru.y.push_back((*tr)(k));
                }
            }
            for (Eigen::Index i = 0; i < cfg.obs.rows(); ++i) obs.y.push_back(cfg.obs(i, k));
            std::vector<Series> lines{obs, med};
            if (!tru.x.empty()) lines.push_back(tru);
            out.write("assimilation_" + naming.states[static_cast<std::size_t>(k)] + ".svg",
                      svg_plot(b.id + " assimilation: " + naming.states[static_cast<std::size_t>(k)], lines, {lo, hi}));
        }
    }
    write_provenance(out, "assimilate", c, argv,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                     {{"report", report_path},
                      {"report_sha1", git_blob_sha1(read_file(report_path))},
                      {"window", window},
                      {"interval", r12(cfg.interval)},
                      {"members", members},
                      {"reinitialized", res.reinitialized}});
    return 0;
}

int cmd_evaluate(const std::string& report_path, const std::string& benchmark_override, bool as_json) {
    const json report = read_report(report_path);
    const std::string id = benchmark_override.empty() ? report.at("benchmark").get<std::string>() : benchmark_override;
    if (id == "custom") throw ConfigError("no reference coefficients for a custom dataset");
    RunConfig c = resolve(report.at("config"));
    c.benchmark = id;
    const zoo::Benchmark b = make_context(c, nullptr);
    const auto terms = library::build_library(b.library, b.num_states, b.spline_degree);
    const Eigen::MatrixXd W = W_from_report(report, terms, b.num_states, "mean");
    const Eigen::MatrixXd S = W_from_report(report, terms, b.num_states, "std");
    const Eigen::MatrixXd truth = zoo::true_coefficients(b, terms);
    const auto sc = metrics::score(terms, W, truth, S, zoo::naming(b));
    const double noise = report.value("noise", 0.0);
    if (as_json) {
        json row = {{"benchmark", id}, {"noise", num(noise)}, {"rmse_e3", num(metrics::table_units(sc.rmse))}};
        row.update(score_json(sc));
        json terms_json = json::array();
        for (const auto& t : sc.terms)
            terms_json.push_back({{"term", t.term}, {"state", t.state}, {"truth", num(t.truth)}, {"mean", num(t.mean)},
                                  {"std", num(t.std)}});
        row["terms"] = terms_json;
        std::cout << row.dump(2) << '\n';
    } else {
        std::printf("%-16s %8s %14s %6s %6s\n", "benchmark", "noise", "rmse (1e-3)", "M_P", "M_R");
        std::printf("%-16s %7.0f%% %14.4g %6.3g %6.3g\n", id.c_str(), 100 * noise, metrics::table_units(sc.rmse),
                    sc.precision, sc.recall);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian spline learning for equation discovery"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    Common sim_opts;
    auto* sim = app.add_subcommand("simulate", "write clean and noisy benchmark datasets");
    add_common(sim, sim_opts);
    sim->allow_extras();

    Common disc_opts;
    bool deterministic = false;
    bool svg = false;
    std::string schedule;
    int samples = 0;
    int disc_members = 0;
    auto* disc = app.add_subcommand("discover", "discover equations from data");
    add_common(disc, disc_opts);
    disc->add_flag("--deterministic", deterministic, "skip SWAG and report point estimates");
    disc->add_flag("--svg", svg, "also write SVG plots");
    disc->add_option("--schedule", schedule, "epoch schedule")->check(CLI::IsMember({"full", "desk"}));
    disc->add_option("--samples", samples, "posterior coefficient samples to write")->check(CLI::PositiveNumber);
    disc->add_option("--members", disc_members, "forward ensemble size")->check(CLI::Range(2, 100000));
    disc->allow_extras();

    Common da_opts;
    std::string report_path;
    std::vector<double> window;
    double spacing = 0;
    double horizon = std::nan("");
    int members = 0;
    bool da_svg = false;
    auto* da = app.add_subcommand("assimilate", "ensemble Kalman filter with a discovered model");
    add_common(da, da_opts);
    da->add_option("--report", report_path, "discovery report.json")->required();
    da->add_option("--window", window, "observation window start end")->expected(2);
    da->add_option("--spacing", spacing, "time between assimilated observations");
    da->add_option("--horizon", horizon, "end time of the free run");
    da->add_option("--members", members, "ensemble size")->check(CLI::Range(2, 100000));
    da->add_flag("--svg", da_svg, "also write SVG plots");

    std::string eval_report;
    std::string eval_benchmark;
    bool eval_json = false;
    auto* ev = app.add_subcommand("evaluate", "score a discovery report against reference coefficients");
    ev->add_option("--report", eval_report, "discovery report.json")->required();
    ev->add_option("--benchmark", eval_benchmark, "benchmark id (defaults to the report's)");
    ev->add_flag("--json", eval_json, "print JSON instead of a table row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sim) return cmd_simulate(resolve(merged_config(sim_opts, sim->remaining())), args);
        if (*disc) {
            json raw = merged_config(disc_opts, disc->remaining());
            if (deterministic) raw["deterministic"] = true;
            if (!schedule.empty()) raw["schedule"] = schedule;
            if (svg) raw["outputs"]["svg"] = true;
            if (samples > 0) raw["outputs"]["samples"] = samples;
            if (disc_members > 0) raw["outputs"]["members"] = disc_members;
            return cmd_discover(resolve(raw), args);
        }
        if (*da) {
            json raw = merged_config(da_opts, {});
            if (da_svg) raw["outputs"]["svg"] = true;
            // Without a benchmark or dataset the report's configuration is reused.
            RunConfig c;
            if (raw.contains("benchmark") || raw.contains("dataset")) {
                c = resolve(raw);
            } else {
                c.raw = raw;
                c.output = raw.value("output", std::string("bsl_out"));
                c.seed = raw.value("seed", std::uint64_t{0});
            }
            return cmd_assimilate(c, report_path, window, spacing, horizon, members, args);
        }
        if (*ev) return cmd_evaluate(eval_report, eval_benchmark, eval_json);
    } catch (const DiscoveryFailure& e) {
        std::cerr << "discovery failed: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const SingularityError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
