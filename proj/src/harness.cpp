#include "sgne/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "sgne/errors.hpp"

namespace sgne::harness {

namespace fs = std::filesystem;
using Eigen::Index;

namespace {

Index idx(std::size_t v) { return static_cast<Index>(v); }

// ---- YAML reading -------------------------------------------------------

struct Reader {
    std::string source;

    [[noreturn]] void fail(const YAML::Node& node, const std::string& path, const std::string& msg) const {
        std::string where;
        const YAML::Mark mark = node.Mark();
        if (!mark.is_null())
            where = " (line " + std::to_string(mark.line + 1) + ", column " + std::to_string(mark.column + 1) + ")";
        throw ConfigError(source + ": " + path + ": " + msg + where);
    }

    void require_map(const YAML::Node& node, const std::string& path) const {
        if (!node.IsMap())
            fail(node, path, "expected a mapping");
    }

    void check_keys(const YAML::Node& node, const std::string& path, const std::set<std::string>& allowed) const {
        require_map(node, path);
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.contains(key)) {
                std::string valid;
                for (const auto& k : allowed)
                    valid += (valid.empty() ? "" : ", ") + k;
                fail(kv.first, join(path, key), "unknown key '" + join(path, key) + "' (valid: " + valid + ")");
            }
        }
    }

    template <typename T>
    T get(const YAML::Node& node, const std::string& path, const char* type) const {
        if (!node.IsScalar())
            fail(node, path, std::string("expected ") + type);
        try {
            return node.as<T>();
        } catch (const YAML::BadConversion&) {
            fail(node, path, std::string("expected ") + type + ", got '" + node.Scalar() + "'");
        }
    }

    double number(const YAML::Node& node, const std::string& path) const {
        return get<double>(node, path, "a number");
    }

    double positive(const YAML::Node& node, const std::string& path) const {
        const double v = number(node, path);
        if (!(v > 0.0))
            fail(node, path, "must be positive");
        return v;
    }

    std::size_t count(const YAML::Node& node, const std::string& path) const {
        if (node.IsScalar() && !node.Scalar().empty() && node.Scalar().front() == '-')
            fail(node, path, "must be nonnegative");
        return get<std::size_t>(node, path, "a nonnegative integer");
    }

    std::uint64_t u64(const YAML::Node& node, const std::string& path) const {
        if (node.IsScalar() && !node.Scalar().empty() && node.Scalar().front() == '-')
            fail(node, path, "must be nonnegative");
        return get<std::uint64_t>(node, path, "an unsigned 64-bit integer");
    }

    bool boolean(const YAML::Node& node, const std::string& path) const {
        return get<bool>(node, path, "true or false");
    }

    std::string string(const YAML::Node& node, const std::string& path) const {
        return get<std::string>(node, path, "a string");
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

    template <typename F>
    auto wrap(const YAML::Node& node, const std::string& path, F&& f) const {
        try {
            return f();
        } catch (const ConfigError& e) {
            fail(node, path, e.what());
        }
    }
};

const std::set<std::string> kSolverKeys{"max_iters", "tol",        "stop_metric", "batch",
                                        "step",      "step_scale", "estimator",   "rho_scale",
                                        "experimental", "experimental_decay", "divergence_threshold"};

void read_solver_keys(const Reader& r, const YAML::Node& node, const std::string& path, AlgorithmEntry& e) {
    SolverConfig& s = e.solver;
    if (auto v = node["max_iters"]) {
        s.max_iters = r.count(v, Reader::join(path, "max_iters"));
        if (s.max_iters == 0)
            r.fail(v, Reader::join(path, "max_iters"), "must be positive");
    }
    if (auto v = node["tol"]) {
        if (v.IsNull())
            s.tol.reset();
        else
            s.tol = r.positive(v, Reader::join(path, "tol"));
    }
    if (auto v = node["stop_metric"]) {
        const auto p = Reader::join(path, "stop_metric");
        s.stop_metric = r.wrap(v, p, [&] { return parse_stop_metric(r.string(v, p)); });
    }
    if (auto v = node["batch"]) {
        const auto p = Reader::join(path, "batch");
        r.check_keys(v, p, {"c", "k0", "a"});
        if (auto c = v["c"]) s.batch.c = r.positive(c, p + ".c");
        if (auto k0 = v["k0"]) {
            s.batch.k0 = r.number(k0, p + ".k0");
            if (!(s.batch.k0 >= 0.0)) r.fail(k0, p + ".k0", "must be nonnegative");
        }
        if (auto a = v["a"]) {
            s.batch.a = r.number(a, p + ".a");
            if (!(s.batch.a > 0.0)) r.fail(a, p + ".a", "must be positive");
        }
        r.wrap(v, p, [&] { s.batch.validate(); return 0; });
    }
    if (auto v = node["step"]) {
        const auto p = Reader::join(path, "step");
        r.check_keys(v, p, {"gamma0", "eta", "cap"});
        if (auto g = v["gamma0"]) e.step.gamma0 = r.positive(g, p + ".gamma0");
        if (auto eta = v["eta"]) {
            const double x = r.number(eta, p + ".eta");
            if (!(x > 0.5 && x <= 1.0))
                r.fail(eta, p + ".eta", "must lie in (0.5, 1]");
            e.step.eta = x;
        }
        if (auto c = v["cap"]) e.step.cap = r.positive(c, p + ".cap");
    }
    if (auto v = node["step_scale"]) e.step_scale = r.positive(v, Reader::join(path, "step_scale"));
    if (auto v = node["estimator"]) {
        const auto p = Reader::join(path, "estimator");
        s.estimator = r.wrap(v, p, [&] { return parse_estimator(r.string(v, p)); });
    }
    if (auto v = node["rho_scale"]) s.rho_scale = r.positive(v, Reader::join(path, "rho_scale"));
    if (auto v = node["experimental"]) s.experimental = r.boolean(v, Reader::join(path, "experimental"));
    if (auto v = node["experimental_decay"])
        s.experimental_decay = r.boolean(v, Reader::join(path, "experimental_decay"));
    if (auto v = node["divergence_threshold"])
        s.divergence_threshold = r.positive(v, Reader::join(path, "divergence_threshold"));
}

cournot::CournotParams read_params(const Reader& r, const YAML::Node& node, const std::string& path) {
    nlohmann::json j = cournot::to_json(cournot::CournotParams{});
    std::set<std::string> allowed;
    for (const auto& item : j.items())
        allowed.insert(item.key());
    r.check_keys(node, path, allowed);
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        const auto p = Reader::join(path, key);
        nlohmann::json& slot = j[key];
        if (slot.is_array()) {
            if (!kv.second.IsSequence() || kv.second.size() != 2)
                r.fail(kv.second, p, "expected a [lo, hi] pair");
            slot = {r.number(kv.second[0], p + "[0]"), r.number(kv.second[1], p + "[1]")};
        } else if (slot.is_boolean()) {
            slot = r.boolean(kv.second, p);
        } else if (slot.is_number_unsigned() || slot.is_number_integer()) {
            slot = r.count(kv.second, p);
        } else {
            slot = r.number(kv.second, p);
        }
    }
    return r.wrap(node, path, [&] { return cournot::params_from_json(j); });
}

// ---- YAML writing -------------------------------------------------------

void emit_solver_keys(YAML::Emitter& out, const AlgorithmEntry& e) {
    const SolverConfig& s = e.solver;
    out << YAML::Key << "max_iters" << YAML::Value << s.max_iters;
    out << YAML::Key << "tol" << YAML::Value;
    if (s.tol)
        out << format_double(*s.tol);
    else
        out << YAML::Null;
    out << YAML::Key << "stop_metric" << YAML::Value << std::string(to_string(s.stop_metric));
    out << YAML::Key << "batch" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "c" << YAML::Value
        << format_double(s.batch.c) << YAML::Key << "k0" << YAML::Value << format_double(s.batch.k0) << YAML::Key
        << "a" << YAML::Value << format_double(s.batch.a) << YAML::EndMap;
    if (e.step.gamma0 || e.step.eta || e.step.cap) {
        out << YAML::Key << "step" << YAML::Value << YAML::Flow << YAML::BeginMap;
        if (e.step.gamma0) out << YAML::Key << "gamma0" << YAML::Value << format_double(*e.step.gamma0);
        if (e.step.eta) out << YAML::Key << "eta" << YAML::Value << format_double(*e.step.eta);
        if (e.step.cap) out << YAML::Key << "cap" << YAML::Value << format_double(*e.step.cap);
        out << YAML::EndMap;
    }
    out << YAML::Key << "step_scale" << YAML::Value << format_double(e.step_scale);
    out << YAML::Key << "estimator" << YAML::Value << std::string(to_string(s.estimator));
    out << YAML::Key << "rho_scale" << YAML::Value << format_double(s.rho_scale);
    out << YAML::Key << "experimental" << YAML::Value << s.experimental;
    out << YAML::Key << "experimental_decay" << YAML::Value << s.experimental_decay;
    out << YAML::Key << "divergence_threshold" << YAML::Value << format_double(s.divergence_threshold);
}

// ---- CSV ----------------------------------------------------------------

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("run csv line " + std::to_string(line) + ": malformed " + name + " '" +
                          std::string(field) + "'");
    return value;
}

double parse_double_field(std::string_view field, std::size_t line, const char* name) {
    if (field == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (field == "inf")
        return std::numeric_limits<double>::infinity();
    if (field == "-inf")
        return -std::numeric_limits<double>::infinity();
    return parse_field<double>(field, line, name);
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

bool valid_label(const std::string& label) {
    return !label.empty() && std::all_of(label.begin(), label.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

std::string cell_stem(const std::string& label, std::uint64_t seed) {
    return label + "_seed" + std::to_string(seed);
}

bool needs_schedule(const SolverConfig& s) {
    return s.algorithm == Algorithm::sne_fb_sa || s.algorithm == Algorithm::sne_fb_saa || s.experimental_decay;
}

} // namespace

// ---- config -------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (algorithms.empty())
        throw ConfigError("algorithms: at least one algorithm is required");
    if (seeds.empty())
        throw ConfigError("seeds: at least one seed is required");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < algorithms.size(); ++i) {
        const auto& label = algorithms[i].label;
        if (!valid_label(label))
            throw ConfigError("algorithms[" + std::to_string(i) + "].label: '" + label +
                              "' must be nonempty and use only letters, digits, '_', '-', '.'");
        if (!labels.insert(label).second)
            throw ConfigError("algorithms[" + std::to_string(i) + "].label: duplicate label '" + label + "'");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("seeds: duplicate seed");
    if (!(reference_tol > 0.0))
        throw ConfigError("reference_tol: must be positive");
    if (!(comparison_accuracy > 0.0))
        throw ConfigError("comparison_accuracy: must be positive");
    if (output_dir.empty())
        throw ConfigError("output_dir: must not be empty");
    instance.params.validate();
}

ExperimentConfig parse_config(const std::string& text, const std::string& source, const fs::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ": parse error at line " + std::to_string(e.mark.line + 1) + ", column " +
                          std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
    const Reader r{source};
    if (!root.IsMap())
        r.fail(root, "<root>", "expected a mapping at the top level");
    r.check_keys(root, "", {"instance", "algorithms", "seeds", "output_dir", "cache_dir", "reference_tol",
                            "comparison_accuracy", "defaults"});

    ExperimentConfig cfg;
    if (auto inst = root["instance"]) {
        r.check_keys(inst, "instance", {"seed", "file", "params"});
        if (auto s = inst["seed"]) cfg.instance.seed = r.u64(s, "instance.seed");
        if (auto f = inst["file"]) {
            fs::path p = r.string(f, "instance.file");
            cfg.instance.file = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            if (inst["seed"] || inst["params"])
                r.fail(f, "instance.file", "cannot be combined with instance.seed or instance.params");
        }
        if (auto p = inst["params"]) cfg.instance.params = read_params(r, p, "instance.params");
    } else {
        r.fail(root, "instance", "missing required section");
    }

    AlgorithmEntry defaults;
    if (auto d = root["defaults"]) {
        r.check_keys(d, "defaults", kSolverKeys);
        read_solver_keys(r, d, "defaults", defaults);
    }

    const auto algos = root["algorithms"];
    if (!algos)
        r.fail(root, "algorithms", "missing required list");
    if (!algos.IsSequence())
        r.fail(algos, "algorithms", "expected a list");
    for (std::size_t i = 0; i < algos.size(); ++i) {
        const auto node = algos[i];
        const auto path = "algorithms[" + std::to_string(i) + "]";
        AlgorithmEntry e = defaults;
        if (node.IsScalar()) {
            const auto name = r.string(node, path);
            e.solver.algorithm = r.wrap(node, path, [&] { return parse_algorithm(name); });
            e.label = name;
        } else {
            std::set<std::string> allowed = kSolverKeys;
            allowed.insert({"name", "label"});
            r.check_keys(node, path, allowed);
            const auto name_node = node["name"];
            if (!name_node)
                r.fail(node, path + ".name", "missing algorithm name");
            const auto name = r.string(name_node, path + ".name");
            e.solver.algorithm = r.wrap(name_node, path + ".name", [&] { return parse_algorithm(name); });
            e.label = node["label"] ? r.string(node["label"], path + ".label") : name;
            read_solver_keys(r, node, path, e);
        }
        cfg.algorithms.push_back(std::move(e));
    }

    if (auto s = root["seeds"]) {
        cfg.seeds.clear();
        if (s.IsScalar()) {
            cfg.seeds.push_back(r.u64(s, "seeds"));
        } else if (s.IsSequence()) {
            for (std::size_t i = 0; i < s.size(); ++i)
                cfg.seeds.push_back(r.u64(s[i], "seeds[" + std::to_string(i) + "]"));
        } else {
            r.fail(s, "seeds", "expected a seed or a list of seeds");
        }
    }
    if (auto o = root["output_dir"]) cfg.output_dir = r.string(o, "output_dir");
    if (auto c = root["cache_dir"]) cfg.cache_dir = r.string(c, "cache_dir");
    if (auto t = root["reference_tol"]) cfg.reference_tol = r.positive(t, "reference_tol");
    if (auto a = root["comparison_accuracy"]) cfg.comparison_accuracy = r.positive(a, "comparison_accuracy");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.string(), path.parent_path());
}

std::string emit_config(const ExperimentConfig& cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "instance" << YAML::Value << YAML::BeginMap;
    if (cfg.instance.file) {
        out << YAML::Key << "file" << YAML::Value << cfg.instance.file->string();
    } else {
        out << YAML::Key << "seed" << YAML::Value << cfg.instance.seed;
        out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
        const nlohmann::json params = cournot::to_json(cfg.instance.params);
        for (const auto& item : params.items()) {
            out << YAML::Key << item.key() << YAML::Value;
            const auto& v = item.value();
            if (v.is_array())
                out << YAML::Flow << YAML::BeginSeq << format_double(v[0].get<double>())
                    << format_double(v[1].get<double>()) << YAML::EndSeq;
            else if (v.is_boolean())
                out << v.get<bool>();
            else if (v.is_number_unsigned() || v.is_number_integer())
                out << v.get<std::size_t>();
            else
                out << format_double(v.get<double>());
        }
        out << YAML::EndMap;
    }
    out << YAML::EndMap;

    out << YAML::Key << "algorithms" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : cfg.algorithms) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << std::string(to_string(e.solver.algorithm));
        out << YAML::Key << "label" << YAML::Value << e.label;
        emit_solver_keys(out, e);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (auto s : cfg.seeds)
        out << s;
    out << YAML::EndSeq;
    out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir.string();
    if (!cfg.cache_dir.empty())
        out << YAML::Key << "cache_dir" << YAML::Value << cfg.cache_dir.string();
    out << YAML::Key << "reference_tol" << YAML::Value << format_double(cfg.reference_tol);
    out << YAML::Key << "comparison_accuracy" << YAML::Value << format_double(cfg.comparison_accuracy);
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    // The emitted form is complete and canonical.
    return emit_config(a) == emit_config(b);
}

cournot::CournotInstance load_instance(const InstanceSource& source) {
    if (!source.file)
        return cournot::generate_instance(source.seed, source.params);
    std::ifstream in(*source.file);
    if (!in)
        throw ConfigError("instance.file: cannot open " + source.file->string());
    try {
        return cournot::instance_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("instance.file: " + source.file->string() + ": " + e.what());
    }
}

void save_instance(const cournot::CournotInstance& instance, const fs::path& path) {
    std::ofstream out(path);
    out << cournot::to_json(instance).dump(1) << '\n';
    if (!out)
        throw std::runtime_error("cannot write instance file " + path.string());
}

SolverConfig resolve_solver(const AlgorithmEntry& entry, const GameDefinition& game, const DualGraph& graph,
                            std::uint64_t seed) {
    SolverConfig s = entry.solver;
    s.seed = seed;
    const bool two_step = s.algorithm == Algorithm::fbf || s.algorithm == Algorithm::eg;
    StepSizes steps = two_step ? lipschitz_step_sizes(game, graph) : default_step_sizes(game, graph);
    steps.alpha *= entry.step_scale;
    steps.nu *= entry.step_scale;
    steps.sigma *= entry.step_scale;
    steps.gamma /= entry.step_scale;
    s.steps = steps;
    if (needs_schedule(s)) {
        StepSchedule sched = default_step_schedule(game, graph);
        if (entry.step.gamma0) sched.gamma0 = *entry.step.gamma0;
        if (entry.step.eta) sched.eta = *entry.step.eta;
        if (entry.step.cap) sched.cap = *entry.step.cap;
        s.schedule = sched;
    }
    validate(s, game);
    return s;
}

// ---- CSV ----------------------------------------------------------------

std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_run_csv(std::ostream& out, const std::vector<IterationMetrics>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.k << ',' << format_double(r.rel_dist) << ',' << format_double(r.dual_disagreement) << ','
            << format_double(r.kkt_stat) << ',' << format_double(r.kkt_feas) << ',' << format_double(r.kkt_comp)
            << ',' << r.oracle_calls << ',' << r.samples << ',' << r.elapsed_ns << '\n';
    }
}

std::vector<IterationMetrics> read_run_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw ConfigError("run csv: missing or unexpected header");
    std::vector<IterationMetrics> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            f.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        if (f.size() != 9)
            throw ConfigError("run csv line " + std::to_string(lineno) + ": expected 9 fields");
        IterationMetrics r;
        r.k = parse_field<std::size_t>(f[0], lineno, "k");
        r.rel_dist = parse_double_field(f[1], lineno, "rel_dist");
        r.dual_disagreement = parse_double_field(f[2], lineno, "dual_disagreement");
        r.kkt_stat = parse_double_field(f[3], lineno, "kkt_stat");
        r.kkt_feas = parse_double_field(f[4], lineno, "kkt_feas");
        r.kkt_comp = parse_double_field(f[5], lineno, "kkt_comp");
        r.oracle_calls = parse_field<std::size_t>(f[6], lineno, "oracle_calls");
        r.samples = parse_field<std::size_t>(f[7], lineno, "samples");
        r.elapsed_ns = parse_field<std::int64_t>(f[8], lineno, "elapsed_ns");
        rows.push_back(r);
    }
    return rows;
}

// ---- experiments --------------------------------------------------------

std::size_t ExperimentResult::failed_cells() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok; }));
}

std::vector<ComparisonRow> compare_cells(const std::vector<CellResult>& cells, double accuracy) {
    std::vector<ComparisonRow> out;
    std::map<std::string, std::size_t> index;
    std::map<std::string, double> call_sum;
    for (const auto& c : cells) {
        auto [it, fresh] = index.try_emplace(c.label, out.size());
        if (fresh) {
            ComparisonRow row;
            row.label = c.label;
            row.algorithm = c.algorithm;
            out.push_back(row);
        }
        ComparisonRow& row = out[it->second];
        ++row.cells;
        row.mean_total_calls += static_cast<double>(c.record.total_oracle_calls());
        row.mean_wall_ns += static_cast<double>(c.record.total_elapsed_ns());
        if (const auto calls = c.record.calls_to_accuracy(accuracy)) {
            ++row.cells_reached;
            call_sum[c.label] += static_cast<double>(*calls);
            row.max_calls = std::max(row.max_calls.value_or(0), *calls);
        }
    }
    for (auto& row : out) {
        row.mean_total_calls /= static_cast<double>(row.cells);
        row.mean_wall_ns /= static_cast<double>(row.cells);
        if (row.cells_reached > 0)
            row.mean_calls = call_sum[row.label] / static_cast<double>(row.cells_reached);
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec || !fs::is_directory(config.output_dir))
        throw ConfigError("output_dir: cannot create " + config.output_dir.string());
    {
        std::ofstream probe(config.output_dir / "config.yaml");
        probe << emit_config(config);
        if (!probe)
            throw ConfigError("output_dir: " + config.output_dir.string() + " is not writable");
    }

    const cournot::CournotInstance instance = load_instance(config.instance);
    const GameDefinition game = cournot::make_game(instance);
    const DualGraph graph = cournot::make_graph(instance);
    save_instance(instance, config.output_dir / "instance.json");

    ExperimentResult result;
    result.instance_hash = cournot::instance_hash(instance);

    struct Cell {
        const AlgorithmEntry* entry;
        std::uint64_t seed;
        SolverConfig solver;
    };
    std::vector<Cell> plan;
    for (std::size_t i = 0; i < config.algorithms.size(); ++i) {
        const auto& e = config.algorithms[i];
        for (auto seed : config.seeds) {
            try {
                plan.push_back({&e, seed, resolve_solver(e, game, graph, seed)});
            } catch (const ConfigError& err) {
                throw ConfigError("algorithms[" + std::to_string(i) + "] (" + e.label + "): " + err.what());
            }
        }
    }

    const fs::path cache_dir = config.cache_dir.empty() ? config.output_dir / "cache" : config.cache_dir;
    result.reference = ReferenceCache(cache_dir).get_or_compute(result.instance_hash, game, graph,
                                                                config.reference_tol, &result.reference_cache_hit);
    const std::string config_text = emit_config(config);

    for (const auto& cell : plan) {
        CellResult c;
        c.label = cell.entry->label;
        c.algorithm = cell.solver.algorithm;
        c.seed = cell.seed;
        try {
            c.record = run(cell.solver, game, graph, &*result.reference);
            c.ok = true;
        } catch (const RunAborted& e) {
            c.record = e.record;
            c.message = e.what();
        } catch (const std::exception& e) {
            c.record.algorithm = c.algorithm;
            c.record.seed = c.seed;
            c.message = e.what();
        }

        const std::string stem = cell_stem(c.label, c.seed);
        c.csv_path = config.output_dir / (stem + ".csv");
        {
            std::ofstream out(c.csv_path);
            write_run_csv(out, c.record.rows);
        }
        nlohmann::json sidecar = {{"schema", "sgne.cell/1"},
                                  {"label", c.label},
                                  {"algorithm", std::string(to_string(c.algorithm))},
                                  {"seed", c.seed},
                                  {"instance_hash", result.instance_hash},
                                  {"status", c.ok ? "ok" : "failed"},
                                  {"message", c.message},
                                  {"iterations", c.record.rows.size()},
                                  {"estimator", std::string(to_string(effective_estimator(cell.solver)))},
                                  {"batch", {{"c", cell.solver.batch.c}, {"k0", cell.solver.batch.k0}, {"a", cell.solver.batch.a}}},
                                  {"steps",
                                   {{"gamma", cell.solver.steps->gamma},
                                    {"alpha", vec_json(cell.solver.steps->alpha)},
                                    {"nu", vec_json(cell.solver.steps->nu)},
                                    {"sigma", vec_json(cell.solver.steps->sigma)}}},
                                  {"schedule", nullptr},
                                  {"config", config_text}};
        if (cell.solver.schedule) {
            const auto& s = *cell.solver.schedule;
            sidecar["schedule"] = {{"gamma0", s.gamma0}, {"eta", s.eta}, {"cap", format_double(s.cap)}};
        }
        std::ofstream(config.output_dir / (stem + ".json")) << sidecar.dump(1) << '\n';
        result.cells.push_back(std::move(c));
    }

    result.summary_path = config.output_dir / "summary.csv";
    {
        std::ofstream out(result.summary_path);
        out << "label,algorithm,seed,status,iterations,final_rel_dist,final_dual_disagreement,final_kkt_stat,"
               "total_oracle_calls,total_samples,total_elapsed_ns,calls_to_accuracy,message\n";
        for (const auto& c : result.cells) {
            const bool any = !c.record.rows.empty();
            const auto last = any ? c.record.rows.back() : IterationMetrics{};
            const auto calls = c.record.calls_to_accuracy(config.comparison_accuracy);
            std::string msg = c.message;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            out << c.label << ',' << to_string(c.algorithm) << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ','
                << c.record.rows.size() << ',' << (any ? format_double(last.rel_dist) : "nan") << ','
                << (any ? format_double(last.dual_disagreement) : "nan") << ','
                << (any ? format_double(last.kkt_stat) : "nan") << ',' << c.record.total_oracle_calls() << ','
                << c.record.total_samples() << ',' << c.record.total_elapsed_ns() << ','
                << (calls ? std::to_string(*calls) : "") << ',' << msg << '\n';
        }
    }

    result.comparison = compare_cells(result.cells, config.comparison_accuracy);
    result.comparison_path = config.output_dir / "comparison.csv";
    {
        std::ofstream out(result.comparison_path);
        out << "label,algorithm,cells,cells_reached,accuracy,mean_calls_to_accuracy,max_calls_to_accuracy,"
               "mean_total_oracle_calls,mean_wall_ns\n";
        for (const auto& row : result.comparison)
            out << row.label << ',' << to_string(row.algorithm) << ',' << row.cells << ',' << row.cells_reached << ','
                << format_double(config.comparison_accuracy) << ','
                << (row.mean_calls ? format_double(*row.mean_calls) : "") << ','
                << (row.max_calls ? std::to_string(*row.max_calls) : "") << ','
                << format_double(row.mean_total_calls) << ',' << format_double(row.mean_wall_ns) << '\n';
    }
    return result;
}

const std::vector<std::string>& plot_metrics() {
    static const std::vector<std::string> names{"rel_dist", "dual_disagreement", "kkt_stat",    "kkt_feas",
                                                "kkt_comp", "oracle_calls",      "samples", "elapsed_ns"};
    return names;
}

void export_plot_data(std::ostream& out, const std::vector<LabeledRun>& runs, const std::string& metric) {
    const auto& names = plot_metrics();
    if (std::find(names.begin(), names.end(), metric) == names.end()) {
        std::string valid;
        for (const auto& n : names)
            valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("unknown metric '" + metric + "' (valid: " + valid + ")");
    }
    if (runs.empty())
        throw ConfigError("export: no run records");
    auto value = [&](const IterationMetrics& r) -> std::string {
        if (metric == "rel_dist") return format_double(r.rel_dist);
        if (metric == "dual_disagreement") return format_double(r.dual_disagreement);
        if (metric == "kkt_stat") return format_double(r.kkt_stat);
        if (metric == "kkt_feas") return format_double(r.kkt_feas);
        if (metric == "kkt_comp") return format_double(r.kkt_comp);
        if (metric == "oracle_calls") return std::to_string(r.oracle_calls);
        if (metric == "samples") return std::to_string(r.samples);
        return std::to_string(r.elapsed_ns);
    };
    out << "algorithm,seed,k,value\n";
    for (const auto& run : runs)
        for (const auto& r : run.rows)
            out << run.algorithm << ',' << run.seed << ',' << r.k << ',' << value(r) << '\n';
}

std::vector<LabeledRun> load_runs(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw ConfigError("export: " + dir.string() + " is not a directory");
    std::vector<fs::path> sidecars;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json")
            sidecars.push_back(entry.path());
    std::sort(sidecars.begin(), sidecars.end());
    std::vector<LabeledRun> runs;
    for (const auto& path : sidecars) {
        std::ifstream in(path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception&) {
            continue;
        }
        if (!doc.is_object() || doc.value("schema", "") != "sgne.cell/1")
            continue;
        LabeledRun run;
        run.algorithm = doc.at("label").get<std::string>();
        run.seed = doc.at("seed").get<std::uint64_t>();
        fs::path csv = path;
        csv.replace_extension(".csv");
        std::ifstream csv_in(csv);
        if (!csv_in)
            throw ConfigError("export: missing " + csv.string());
        run.rows = read_run_csv(csv_in);
        runs.push_back(std::move(run));
    }
    return runs;
}

std::vector<GridPoint> grid_search(const AlgorithmEntry& entry, const GameDefinition& game, const DualGraph& graph,
                                   const ReferenceSolution& reference, const std::vector<double>& scales,
                                   std::uint64_t seed, double accuracy) {
    std::vector<GridPoint> out;
    for (double scale : scales) {
        if (!(scale > 0.0))
            throw ConfigError("grid_search: scales must be positive");
        AlgorithmEntry e = entry;
        e.step_scale *= scale;
        GridPoint point;
        point.scale = scale;
        RunRecord record;
        try {
            record = run(resolve_solver(e, game, graph, seed), game, graph, &reference);
        } catch (const RunAborted& err) {
            record = err.record;
            point.aborted = true;
        }
        point.final_rel_dist = record.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : record.rows.back().rel_dist;
        point.calls_to_accuracy = record.calls_to_accuracy(accuracy);
        out.push_back(point);
    }
    return out;
}

// ---- property suite -----------------------------------------------------

std::vector<PropertyResult> run_property_suite(const GameDefinition& game, const DualGraph& graph,
                                               const PropertyOptions& options) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto random_vec = [&](Index size) {
        Eigen::VectorXd v(size);
        for (Index i = 0; i < size; ++i)
            v[i] = unit(rng);
        return v;
    };
    const auto n = idx(game.total_dim());
    const auto nm = idx(game.num_constraints() * game.num_agents());
    std::vector<PropertyResult> out;

    {
        PropertyResult r;
        r.name = "skew_orthogonality";
        const Eigen::MatrixXd s = assemble_skew(game, graph);
        double worst = (s + s.transpose()).cwiseAbs().maxCoeff();
        for (std::size_t t = 0; t < options.pairs; ++t) {
            const Eigen::VectorXd w = random_vec(s.rows());
            worst = std::max(worst, std::abs(w.dot(s * w)));
        }
        r.worst = worst;
        r.passed = worst <= 1e-12;
        r.detail = "max |<S w, w>| = " + format_double(worst);
        out.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "laplacian_psd_rowsum";
        const Eigen::MatrixXd lap = graph.laplacian();
        const double rowsum = lap.rowwise().sum().cwiseAbs().maxCoeff();
        const double asym = (lap - lap.transpose()).cwiseAbs().maxCoeff();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap, Eigen::EigenvaluesOnly);
        const double min_eig = eig.eigenvalues().minCoeff();
        r.worst = std::max({rowsum, asym, -min_eig});
        r.passed = rowsum == 0.0 && asym == 0.0 && min_eig >= -1e-12;
        r.detail = "max |row sum| = " + format_double(rowsum) + ", min eigenvalue = " + format_double(min_eig);
        out.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "projection_firm_nonexpansive";
        Eigen::VectorXd lo(n), width(n);
        for (std::size_t i = 0; i < game.num_agents(); ++i) {
            game.agent_slice(lo, i) = game.box(i).lower;
            game.agent_slice(width, i) = game.box(i).upper - game.box(i).lower;
        }
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < options.pairs; ++t) {
            // Points spread over the box and a margin around it.
            const Eigen::VectorXd u = lo + (random_vec(n).array() * (width.array() + 1.0) + 0.5 * width.array()).matrix();
            const Eigen::VectorXd v = lo + (random_vec(n).array() * (width.array() + 1.0) + 0.5 * width.array()).matrix();
            const Eigen::VectorXd d = project_omega(game, u) - project_omega(game, v);
            worst = std::max(worst, d.squaredNorm() - d.dot(u - v));
            if (nm > 0) {
                const Eigen::VectorXd a = random_vec(nm), b = random_vec(nm);
                const Eigen::VectorXd e = project_nonneg(a) - project_nonneg(b);
                worst = std::max(worst, e.squaredNorm() - e.dot(a - b));
            }
        }
        r.worst = worst;
        r.passed = worst <= 1e-12;
        r.detail = "max ||Pu-Pv||^2 - <Pu-Pv, u-v> = " + format_double(worst);
        out.push_back(r);
    }

    double theta = 0.0;
    {
        PropertyResult r;
        r.name = "forward_operator_cocoercive";
        try {
            const double beta = estimate_beta(game);
            theta = nm == 0 ? beta : cocoercivity_theta(beta, graph);
            Eigen::VectorXd lo(n), width(n);
            for (std::size_t i = 0; i < game.num_agents(); ++i) {
                game.agent_slice(lo, i) = game.box(i).lower;
                game.agent_slice(width, i) = game.box(i).upper - game.box(i).lower;
            }
            auto random_state = [&] {
                StackedState s;
                s.x = lo + (0.5 * (random_vec(n).array() + 1.0) * width.array()).matrix();
                s.z = random_vec(nm);
                s.lambda = (random_vec(nm).array() + 1.0).matrix();
                return s;
            };
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < options.pairs; ++t) {
                const StackedState a = random_state(), b = random_state();
                const Eigen::VectorXd fa =
                    forward_eval(game, graph, a, pseudogradient_exact(game, a.x)).flatten();
                const Eigen::VectorXd fb =
                    forward_eval(game, graph, b, pseudogradient_exact(game, b.x)).flatten();
                const Eigen::VectorXd df = fa - fb;
                const double lhs = df.dot(a.flatten() - b.flatten());
                const double rhs = theta * df.squaredNorm();
                worst = std::max(worst, (rhs - lhs) / std::max(1.0, rhs));
            }
            r.worst = worst;
            r.passed = worst <= 1e-10;
            r.detail = "theta = " + format_double(theta) + ", worst relative shortfall = " + format_double(worst);
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = e.what();
        }
        out.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "step_certification";
        try {
            if (!(theta > 0.0))
                throw NumericalError("no cocoercivity constant");
            const StepSizes steps = default_step_sizes(game, graph);
            const Eigen::MatrixXd phi = assemble_phi(game, graph, steps);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(phi, Eigen::EigenvaluesOnly);
            const double min_eig = eig.eigenvalues().minCoeff();
            const double inv_norm = 1.0 / min_eig;
            const bool lower = min_eig >= steps.gamma * (1.0 - 1e-6);
            const bool norm = min_eig > 0.0 && inv_norm < 2.0 * theta;
            r.worst = std::max(steps.gamma * (1.0 - 1e-6) - min_eig, inv_norm - 2.0 * theta);
            r.passed = lower && norm;
            r.detail = "gamma = " + format_double(steps.gamma) + ", lambda_min(Phi) = " + format_double(min_eig) +
                       ", ||Phi^-1|| = " + format_double(inv_norm) + ", 2 theta = " + format_double(2.0 * theta);
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = e.what();
        }
        out.push_back(r);
    }
    return out;
}

} // namespace sgne::harness
