#include "sgne/cournot.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>

#include "sgne/errors.hpp"

namespace sgne::cournot {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), idx(values.size()));
}

nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }
Range range_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

void check_range(const Range& r, const char* name, bool positive = false) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi) || (positive && !(r.lo > 0.0)))
        throw ConfigError(std::string("cournot params: invalid range for ") + name);
}

Incidence random_incidence(std::mt19937_64& rng, const CournotParams& p) {
    const std::size_t hi = std::min(p.max_markets_per_company, p.markets);
    if (p.companies * hi < p.markets * p.min_companies_per_market)
        throw ConfigError("cournot params: participation bounds cannot cover every market");
    std::uniform_int_distribution<std::size_t> count(p.min_markets_per_company, hi);
    std::vector<std::size_t> order(p.markets);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        Incidence inc = Incidence::Zero(idx(p.companies), idx(p.markets));
        for (std::size_t i = 0; i < p.companies; ++i) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            const std::size_t c = count(rng);
            for (std::size_t t = 0; t < c; ++t)
                inc(idx(i), idx(order[t])) = 1;
        }
        if ((inc.colwise().sum().array() >= static_cast<int>(p.min_companies_per_market)).all())
            return inc;
    }
    throw ConfigError("cournot params: could not draw an incidence meeting the participation bounds");
}

std::vector<Eigen::MatrixXd> participation_from(const Incidence& inc) {
    std::vector<Eigen::MatrixXd> out;
    for (Index i = 0; i < inc.rows(); ++i) {
        const int ni = inc.row(i).sum();
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(inc.cols(), ni);
        Index c = 0;
        for (Index j = 0; j < inc.cols(); ++j)
            if (inc(i, j) != 0)
                a(j, c++) = 1.0;
        out.push_back(std::move(a));
    }
    return out;
}

Eigen::VectorXd market_supply(const CournotInstance& inst, const Eigen::VectorXd& x) {
    Eigen::VectorXd ax = Eigen::VectorXd::Zero(idx(inst.params.markets));
    for (std::size_t j = 0; j < inst.participation.size(); ++j)
        ax += inst.participation[j] * x.segment(idx(inst.offset(j)), inst.participation[j].cols());
    return ax;
}

Eigen::VectorXd mean_slopes(const CournotParams& p) {
    return SampleDistribution::normal(p.markets, p.demand_mean, p.demand_variance, p.demand_clamp).mean();
}

} // namespace

void CournotParams::validate() const {
    if (companies == 0 || markets == 0)
        throw ConfigError("cournot params: need at least one company and one market");
    check_range(capacity, "capacity", true);
    check_range(market_cap, "market_cap", true);
    check_range(quadratic_cost, "quadratic_cost", true);
    check_range(linear_cost, "linear_cost");
    check_range(price_intercept, "price_intercept");
    if (!(demand_variance >= 0.0) || !std::isfinite(demand_mean))
        throw ConfigError("cournot params: demand variance must be nonnegative");
    if (min_markets_per_company == 0 || min_markets_per_company > max_markets_per_company)
        throw ConfigError("cournot params: need 1 <= min_markets_per_company <= max_markets_per_company");
}

std::size_t CournotInstance::total_dim() const { return offset(participation.size()); }

std::size_t CournotInstance::offset(std::size_t i) const {
    std::size_t off = 0;
    for (std::size_t j = 0; j < i; ++j)
        off += static_cast<std::size_t>(participation[j].cols());
    return off;
}

CournotInstance generate_instance(std::uint64_t seed, const CournotParams& params,
                                  const std::optional<Incidence>& incidence) {
    params.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x434fu};
    std::mt19937_64 rng(seq);
    auto uniform = [&rng](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };

    CournotInstance inst;
    inst.params = params;
    inst.seed = seed;
    if (incidence) {
        if (incidence->rows() != idx(params.companies) || incidence->cols() != idx(params.markets))
            throw ConfigError("cournot: incidence must be companies x markets");
        if (((incidence->array() != 0) && (incidence->array() != 1)).any())
            throw ConfigError("cournot: incidence entries must be 0 or 1");
        inst.incidence = *incidence;
    } else {
        inst.incidence = random_incidence(rng, params);
    }
    for (Index i = 0; i < inst.incidence.rows(); ++i)
        if (inst.incidence.row(i).sum() == 0)
            throw ConfigError("cournot: company " + std::to_string(i) + " participates in no market");
    inst.participation = participation_from(inst.incidence);

    inst.quadratic_cost.resize(idx(params.companies));
    for (std::size_t i = 0; i < params.companies; ++i) {
        const Index ni = inst.participation[i].cols();
        Eigen::VectorXd cap(ni), q(ni);
        for (Index c = 0; c < ni; ++c)
            cap[c] = uniform(params.capacity);
        inst.quadratic_cost[idx(i)] = uniform(params.quadratic_cost);
        for (Index c = 0; c < ni; ++c)
            q[c] = uniform(params.linear_cost);
        inst.capacity.push_back(std::move(cap));
        inst.linear_cost.push_back(std::move(q));
    }
    inst.market_cap.resize(idx(params.markets));
    inst.price_intercept.resize(idx(params.markets));
    for (std::size_t j = 0; j < params.markets; ++j) {
        inst.market_cap[idx(j)] = uniform(params.market_cap);
        inst.price_intercept[idx(j)] = uniform(params.price_intercept);
    }
    inst.edges = benchmark_edges(params.companies);
    return inst;
}

Eigen::VectorXd sampled_gradient(const CournotInstance& inst, std::size_t i, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& slopes) {
    const Eigen::MatrixXd& ai = inst.participation[i];
    const auto xi = x.segment(idx(inst.offset(i)), ai.cols());
    const Eigen::VectorXd supply = market_supply(inst, x);
    return 2.0 * inst.quadratic_cost[idx(i)] * xi + inst.linear_cost[i] - ai.transpose() * inst.price_intercept +
           ai.transpose() * slopes.cwiseProduct(supply) + ai.transpose() * slopes.cwiseProduct(ai * xi);
}

Eigen::VectorXd exact_gradient(const CournotInstance& inst, std::size_t i, const Eigen::VectorXd& x) {
    return sampled_gradient(inst, i, x, mean_slopes(inst.params));
}

double sampled_cost(const CournotInstance& inst, std::size_t i, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& slopes) {
    const Eigen::MatrixXd& ai = inst.participation[i];
    const auto xi = x.segment(idx(inst.offset(i)), ai.cols());
    const Eigen::VectorXd price = inst.price_intercept - slopes.cwiseProduct(market_supply(inst, x));
    return inst.quadratic_cost[idx(i)] * xi.squaredNorm() + inst.linear_cost[i].dot(xi) - price.dot(ai * xi);
}

GameDefinition make_game(const CournotInstance& instance) {
    const auto& p = instance.params;
    GameData data;
    for (std::size_t i = 0; i < p.companies; ++i) {
        const Index ni = instance.participation[i].cols();
        data.boxes.push_back({Eigen::VectorXd::Zero(ni), instance.capacity[i]});
        if (p.shared_constraints)
            data.blocks.push_back(instance.participation[i]);
        else
            data.blocks.push_back(Eigen::MatrixXd::Zero(0, ni));
    }
    data.shared_bound = p.shared_constraints ? instance.market_cap : Eigen::VectorXd(0);

    auto shared = std::make_shared<const CournotInstance>(instance);
    const Eigen::VectorXd mean = mean_slopes(p);
    GameDefinition::Oracles oracles;
    oracles.sampled = [shared](std::size_t i, const Eigen::VectorXd& x, const SamplePoint& xi) {
        return sampled_gradient(*shared, i, x, xi);
    };
    oracles.exact = [shared, mean](std::size_t i, const Eigen::VectorXd& x) {
        return sampled_gradient(*shared, i, x, mean);
    };
    oracles.affine_in_sample = true;
    return GameDefinition(std::move(data),
                          SampleDistribution::normal(p.markets, p.demand_mean, p.demand_variance, p.demand_clamp),
                          std::move(oracles));
}

DualGraph make_graph(const CournotInstance& instance) {
    return build_dual_graph(instance.edges, instance.params.companies);
}

Eigen::MatrixXd pseudogradient_matrix(const CournotInstance& inst) {
    const Eigen::VectorXd d = mean_slopes(inst.params);
    const auto n = idx(inst.total_dim());
    Eigen::MatrixXd a(idx(inst.params.markets), n);
    for (std::size_t i = 0; i < inst.participation.size(); ++i)
        a.middleCols(idx(inst.offset(i)), inst.participation[i].cols()) = inst.participation[i];
    Eigen::MatrixXd m = a.transpose() * d.asDiagonal() * a;
    for (std::size_t i = 0; i < inst.participation.size(); ++i) {
        const auto& ai = inst.participation[i];
        const Index off = idx(inst.offset(i));
        m.block(off, off, ai.cols(), ai.cols()) +=
            2.0 * inst.quadratic_cost[idx(i)] * Eigen::MatrixXd::Identity(ai.cols(), ai.cols()) +
            ai.transpose() * d.asDiagonal() * ai;
    }
    return m;
}

MonotonicityConstants strong_monotonicity_constants(const CournotInstance& instance) {
    const Eigen::MatrixXd m = pseudogradient_matrix(instance);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sym(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    MonotonicityConstants c;
    c.mu = sym.eigenvalues().minCoeff();
    c.lipschitz = svd.singularValues()[0];
    if (!(c.mu > 0.0))
        throw NumericalError("cournot: pseudogradient is not strongly monotone (mu = " + std::to_string(c.mu) + ")");
    c.beta = c.mu / (c.lipschitz * c.lipschitz);
    return c;
}

nlohmann::json to_json(const CournotParams& p) {
    return {{"companies", p.companies},
            {"markets", p.markets},
            {"capacity", range_json(p.capacity)},
            {"market_cap", range_json(p.market_cap)},
            {"quadratic_cost", range_json(p.quadratic_cost)},
            {"linear_cost", range_json(p.linear_cost)},
            {"price_intercept", range_json(p.price_intercept)},
            {"demand_mean", p.demand_mean},
            {"demand_variance", p.demand_variance},
            {"demand_clamp", p.demand_clamp},
            {"min_markets_per_company", p.min_markets_per_company},
            {"max_markets_per_company", p.max_markets_per_company},
            {"min_companies_per_market", p.min_companies_per_market},
            {"shared_constraints", p.shared_constraints}};
}

CournotParams params_from_json(const nlohmann::json& j) {
    CournotParams p;
    p.companies = j.at("companies").get<std::size_t>();
    p.markets = j.at("markets").get<std::size_t>();
    p.capacity = range_from(j.at("capacity"));
    p.market_cap = range_from(j.at("market_cap"));
    p.quadratic_cost = range_from(j.at("quadratic_cost"));
    p.linear_cost = range_from(j.at("linear_cost"));
    p.price_intercept = range_from(j.at("price_intercept"));
    p.demand_mean = j.at("demand_mean").get<double>();
    p.demand_variance = j.at("demand_variance").get<double>();
    p.demand_clamp = j.at("demand_clamp").get<bool>();
    p.min_markets_per_company = j.at("min_markets_per_company").get<std::size_t>();
    p.max_markets_per_company = j.at("max_markets_per_company").get<std::size_t>();
    p.min_companies_per_market = j.at("min_companies_per_market").get<std::size_t>();
    p.shared_constraints = j.at("shared_constraints").get<bool>();
    p.validate();
    return p;
}

nlohmann::json to_json(const CournotInstance& inst) {
    nlohmann::json incidence = nlohmann::json::array();
    for (Index i = 0; i < inst.incidence.rows(); ++i) {
        std::vector<int> row(inst.incidence.cols());
        for (Index j = 0; j < inst.incidence.cols(); ++j)
            row[static_cast<std::size_t>(j)] = inst.incidence(i, j);
        incidence.push_back(row);
    }
    nlohmann::json companies = nlohmann::json::array();
    for (std::size_t i = 0; i < inst.participation.size(); ++i)
        companies.push_back({{"capacity", vec_json(inst.capacity[i])},
                             {"quadratic_cost", inst.quadratic_cost[idx(i)]},
                             {"linear_cost", vec_json(inst.linear_cost[i])}});
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : inst.edges)
        edges.push_back({e.i, e.j, e.weight});

    const GameDefinition game = make_game(inst);
    return {{"schema", kInstanceSchema},
            {"seed", inst.seed},
            {"params", to_json(inst.params)},
            {"incidence", incidence},
            {"companies", companies},
            {"market_cap", vec_json(inst.market_cap)},
            {"price_intercept", vec_json(inst.price_intercept)},
            {"edges", edges},
            {"game", to_json(game.data())}};
}

CournotInstance instance_from_json(const nlohmann::json& doc) {
    if (doc.value("schema", "") != kInstanceSchema)
        throw ConfigError(std::string("cournot instance: expected schema ") + kInstanceSchema);
    CournotInstance inst;
    inst.params = params_from_json(doc.at("params"));
    inst.seed = doc.at("seed").get<std::uint64_t>();
    const auto& rows = doc.at("incidence");
    if (rows.size() != inst.params.companies)
        throw ConfigError("cournot instance: incidence row count differs from companies");
    inst.incidence = Incidence::Zero(idx(inst.params.companies), idx(inst.params.markets));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = rows[i].get<std::vector<int>>();
        if (row.size() != inst.params.markets)
            throw ConfigError("cournot instance: incidence row has the wrong length");
        for (std::size_t j = 0; j < row.size(); ++j)
            inst.incidence(idx(i), idx(j)) = row[j];
    }
    inst.participation = participation_from(inst.incidence);
    const auto& companies = doc.at("companies");
    if (companies.size() != inst.params.companies)
        throw ConfigError("cournot instance: company block count differs from companies");
    inst.quadratic_cost.resize(idx(inst.params.companies));
    for (std::size_t i = 0; i < companies.size(); ++i) {
        inst.capacity.push_back(vec_from(companies[i].at("capacity")));
        inst.linear_cost.push_back(vec_from(companies[i].at("linear_cost")));
        inst.quadratic_cost[idx(i)] = companies[i].at("quadratic_cost").get<double>();
        if (inst.capacity.back().size() != inst.participation[i].cols() ||
            inst.linear_cost.back().size() != inst.participation[i].cols())
            throw ConfigError("cournot instance: company " + std::to_string(i) + " vectors disagree with incidence");
    }
    inst.market_cap = vec_from(doc.at("market_cap"));
    inst.price_intercept = vec_from(doc.at("price_intercept"));
    for (const auto& e : doc.at("edges"))
        inst.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
    return inst;
}

std::string instance_hash(const CournotInstance& instance) {
    const std::string bytes = to_json(instance).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace sgne::cournot
