#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sgne/cournot.hpp"
#include "sgne/solvers.hpp"

namespace sgne::harness {

/// Generate a Cournot instance from a seed, or load a saved instance file.
struct InstanceSource {
    std::optional<std::filesystem::path> file;
    std::uint64_t seed = 0;
    cournot::CournotParams params;
};

/// Partial vanishing-step schedule; unset fields come from
/// default_step_schedule() of the instance.
struct ScheduleOverrides {
    std::optional<double> gamma0;
    std::optional<double> eta;
    std::optional<double> cap;
};

/// One algorithm column of an experiment. `solver.steps`, `solver.schedule`
/// and `solver.seed` are filled per cell.
struct AlgorithmEntry {
    std::string label;  ///< output name; defaults to the algorithm name
    SolverConfig solver;
    double step_scale = 1.0;  ///< multiplies the default constant steps
    ScheduleOverrides step;
};

struct ExperimentConfig {
    InstanceSource instance;
    std::vector<AlgorithmEntry> algorithms;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir{"out"};
    /// Reference cache location; empty means `<output_dir>/cache`.
    std::filesystem::path cache_dir;
    double reference_tol = 1e-10;
    double comparison_accuracy = 1e-2;

    void validate() const;
};

/// Parses and validates a YAML config. Parse errors carry line/column,
/// semantic errors the key path. Throws ConfigError. `source` names the
/// document in messages; relative instance files resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective config (all defaults explicit) as YAML; parse_config of the
/// result gives back an equal config.
std::string emit_config(const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

cournot::CournotInstance load_instance(const InstanceSource& source);
void save_instance(const cournot::CournotInstance& instance, const std::filesystem::path& path);

/// SolverConfig of one cell with steps, schedule and seed resolved.
SolverConfig resolve_solver(const AlgorithmEntry& entry, const GameDefinition& game, const DualGraph& graph,
                            std::uint64_t seed);

inline constexpr const char* kCsvHeader =
    "k,rel_dist,dual_disagreement,kkt_stat,kkt_feas,kkt_comp,oracle_calls,samples,elapsed_ns";

/// Shortest decimal string that reads back to the same double.
std::string format_double(double v);

void write_run_csv(std::ostream& out, const std::vector<IterationMetrics>& rows);
/// Throws ConfigError on a wrong header or malformed row.
std::vector<IterationMetrics> read_run_csv(std::istream& in);

struct CellResult {
    std::string label;
    Algorithm algorithm = Algorithm::det_fb;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string message;
    RunRecord record;  ///< partial when the run aborted
    std::filesystem::path csv_path;
};

struct ComparisonRow {
    std::string label;
    Algorithm algorithm = Algorithm::det_fb;
    std::size_t cells = 0;
    std::size_t cells_reached = 0;          ///< cells reaching the accuracy
    std::optional<double> mean_calls;       ///< over cells that reached it
    std::optional<std::size_t> max_calls;
    double mean_total_calls = 0.0;
    double mean_wall_ns = 0.0;
};

struct ExperimentResult {
    std::string instance_hash;
    bool reference_cache_hit = false;
    std::optional<ReferenceSolution> reference;
    std::vector<CellResult> cells;
    std::vector<ComparisonRow> comparison;
    std::filesystem::path summary_path;
    std::filesystem::path comparison_path;

    std::size_t failed_cells() const;
};

/// Runs every (algorithm, seed) cell. Writes `<label>_seed<seed>.csv` and a
/// `.json` sidecar per cell, `summary.csv`, `comparison.csv`, the instance
/// file and the effective config. Cell failures are recorded, not thrown.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Comparison of cumulative oracle calls needed to reach `accuracy`.
std::vector<ComparisonRow> compare_cells(const std::vector<CellResult>& cells, double accuracy);

/// Metric columns accepted by export_plot_data.
const std::vector<std::string>& plot_metrics();

struct LabeledRun {
    std::string algorithm;  ///< label
    std::uint64_t seed = 0;
    std::vector<IterationMetrics> rows;
};

/// Long-format `algorithm,seed,k,value` table. Throws ConfigError for an
/// unknown metric (listing valid ones) or an empty record set.
void export_plot_data(std::ostream& out, const std::vector<LabeledRun>& runs, const std::string& metric);

/// Loads every cell of an experiment directory through its sidecars.
std::vector<LabeledRun> load_runs(const std::filesystem::path& dir);

struct GridPoint {
    double scale = 1.0;
    bool aborted = false;
    double final_rel_dist = 0.0;
    std::optional<std::size_t> calls_to_accuracy;
};

/// Runs `entry` with its default steps scaled by each factor.
std::vector<GridPoint> grid_search(const AlgorithmEntry& entry, const GameDefinition& game, const DualGraph& graph,
                                   const ReferenceSolution& reference, const std::vector<double>& scales,
                                   std::uint64_t seed, double accuracy);

struct PropertyResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;  ///< worst observed violation (<= 0 is fine)
    std::string detail;
};

struct PropertyOptions {
    std::size_t pairs = 1000;
    std::uint64_t seed = 0;
};

/// Operator-theoretic checks against an instance: skew orthogonality,
/// Laplacian PSD and zero row sums, firm nonexpansiveness of the
/// projections, theta-cocoercivity of the forward operator, and the step
/// certification.
std::vector<PropertyResult> run_property_suite(const GameDefinition& game, const DualGraph& graph,
                                               const PropertyOptions& options = {});

} // namespace sgne::harness
