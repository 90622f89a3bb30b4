#include "sgne/game.hpp"

#include <string>

#include "sgne/errors.hpp"

namespace sgne {

namespace {

std::string dims_message(const char* what, Eigen::Index got, std::size_t want) {
    return std::string(what) + ": expected length " + std::to_string(want) + ", got " + std::to_string(got);
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace

bool Box::contains(const Eigen::VectorXd& v, double tol) const {
    return v.size() == lower.size() && (v.array() >= lower.array() - tol).all() &&
           (v.array() <= upper.array() + tol).all();
}

GameDefinition::GameDefinition(GameData data, SampleDistribution distribution, Oracles oracles)
    : data_(std::move(data)), distribution_(std::move(distribution)), oracles_(std::move(oracles)) {
    const std::size_t agents = data_.boxes.size();
    if (agents == 0)
        throw ConfigError("game: at least one agent is required");
    if (data_.blocks.size() != agents)
        throw ConfigError("game: one constraint block per agent is required");
    if (!oracles_.sampled)
        throw ConfigError("game: a sampled gradient oracle is required");
    distribution_.validate();

    const auto m = data_.shared_bound.size();
    offsets_.assign(agents + 1, 0);
    for (std::size_t i = 0; i < agents; ++i) {
        const Box& b = data_.boxes[i];
        if (b.lower.size() == 0 || b.lower.size() != b.upper.size())
            throw ConfigError("game: agent " + std::to_string(i) + " has an empty or malformed box");
        if (!b.lower.allFinite() || !b.upper.allFinite() || (b.lower.array() > b.upper.array()).any())
            throw ConfigError("game: agent " + std::to_string(i) + " box must be bounded with lower <= upper");
        if (data_.blocks[i].rows() != m || data_.blocks[i].cols() != b.lower.size())
            throw ConfigError("game: A_" + std::to_string(i) + " must be " + std::to_string(m) + " x " +
                              std::to_string(b.lower.size()));
        offsets_[i + 1] = offsets_[i] + b.dim();
    }
    local_bound_ = data_.shared_bound / static_cast<double>(agents);
}

void GameDefinition::check_decision(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != total_dim())
        throw ConfigError(dims_message("decision vector", x.size(), total_dim()));
}

Eigen::VectorXd GameDefinition::sampled_partial(std::size_t i, const Eigen::VectorXd& x,
                                                const SamplePoint& xi) const {
    if (static_cast<std::size_t>(xi.size()) != sample_dim())
        throw ConfigError(dims_message("sample point", xi.size(), sample_dim()));
    Eigen::VectorXd g = oracles_.sampled(i, x, xi);
    if (static_cast<std::size_t>(g.size()) != dim(i))
        throw ConfigError(dims_message("sampled gradient", g.size(), dim(i)));
    return g;
}

Eigen::VectorXd GameDefinition::exact_partial(std::size_t i, const Eigen::VectorXd& x) const {
    if (!oracles_.exact)
        throw UnsupportedOperation("game has no exact pseudogradient oracle");
    Eigen::VectorXd g = (*oracles_.exact)(i, x);
    if (static_cast<std::size_t>(g.size()) != dim(i))
        throw ConfigError(dims_message("exact gradient", g.size(), dim(i)));
    return g;
}

Eigen::MatrixXd GameDefinition::global_matrix() const {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(num_constraints()), static_cast<Eigen::Index>(total_dim()));
    for (std::size_t i = 0; i < num_agents(); ++i)
        a.middleCols(static_cast<Eigen::Index>(offset(i)), static_cast<Eigen::Index>(dim(i))) = block(i);
    return a;
}

Eigen::VectorXd pseudogradient_sa(const GameDefinition& game, const Eigen::VectorXd& x, const SampleProfile& xi) {
    game.check_decision(x);
    if (xi.size() != game.num_agents())
        throw ConfigError(dims_message("sample profile", static_cast<Eigen::Index>(xi.size()), game.num_agents()));
    Eigen::VectorXd out(x.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(out, i) = game.sampled_partial(i, x, xi[i]);
    return out;
}

Eigen::VectorXd pseudogradient_saa(const GameDefinition& game, const Eigen::VectorXd& x,
                                   std::span<const SampleProfile> batch) {
    if (batch.empty())
        throw ConfigError("pseudogradient_saa: empty batch");
    if (batch.size() == 1)
        return pseudogradient_sa(game, x, batch.front());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.size());
    for (const auto& profile : batch)
        sum += pseudogradient_sa(game, x, profile);
    return sum / static_cast<double>(batch.size());
}

Eigen::VectorXd pseudogradient_exact(const GameDefinition& game, const Eigen::VectorXd& x) {
    if (!game.has_exact())
        throw UnsupportedOperation("pseudogradient_exact: game has no exact pseudogradient oracle");
    game.check_decision(x);
    Eigen::VectorXd out(x.size());
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        game.agent_slice(out, i) = game.exact_partial(i, x);
    return out;
}

Eigen::VectorXd constraint_violation(const GameDefinition& game, const Eigen::VectorXd& x) {
    game.check_decision(x);
    Eigen::VectorXd ax = -game.shared_bound();
    for (std::size_t i = 0; i < game.num_agents(); ++i)
        ax += game.block(i) * game.agent_slice(x, i);
    return ax;
}

nlohmann::json to_json(const GameData& data) {
    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t i = 0; i < data.boxes.size(); ++i) {
        const auto& a = data.blocks[i];
        std::vector<double> rows;
        rows.reserve(static_cast<std::size_t>(a.size()));
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c)
                rows.push_back(a(r, c));
        agents.push_back({{"dim", data.boxes[i].dim()},
                          {"lower", vector_json(data.boxes[i].lower)},
                          {"upper", vector_json(data.boxes[i].upper)},
                          {"A", rows}});
    }
    return {{"schema", "sgne.game/1"},
            {"constraints", data.shared_bound.size()},
            {"b", vector_json(data.shared_bound)},
            {"agents", agents}};
}

GameData game_data_from_json(const nlohmann::json& doc) {
    if (doc.value("schema", "") != "sgne.game/1")
        throw ConfigError("game document: unsupported schema tag");
    GameData data;
    const auto m = doc.at("constraints").get<Eigen::Index>();
    data.shared_bound = vector_from(doc.at("b"));
    if (data.shared_bound.size() != m)
        throw ConfigError("game document: b has the wrong length");
    for (const auto& agent : doc.at("agents")) {
        const auto n = agent.at("dim").get<Eigen::Index>();
        Box box{vector_from(agent.at("lower")), vector_from(agent.at("upper"))};
        const auto entries = agent.at("A").get<std::vector<double>>();
        if (box.lower.size() != n || box.upper.size() != n || static_cast<Eigen::Index>(entries.size()) != m * n)
            throw ConfigError("game document: agent block has inconsistent dimensions");
        Eigen::MatrixXd a(m, n);
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < n; ++c)
                a(r, c) = entries[static_cast<std::size_t>(r * n + c)];
        data.boxes.push_back(std::move(box));
        data.blocks.push_back(std::move(a));
    }
    return data;
}

} // namespace sgne
