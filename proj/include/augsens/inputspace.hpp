#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "augsens/rng.hpp"

namespace augsens {

struct ContinuousUniform {
    double lo = 0.0;
    double hi = 1.0;
};
struct DiscreteUniform {
    long lo = 0;
    long hi = 1;
};
struct Categorical {
    std::size_t cardinality = 2;
};
/// Spike-and-slab gate: on iff a uniform draw exceeds the threshold.
struct Switch {
    double threshold = 0.5;
};

using VariableKind = std::variant<ContinuousUniform, DiscreteUniform, Categorical, Switch>;

/// What a variable means to the augmentation pipeline.
enum class VariableRole {
    Parameter,    // inner parameter of a transform
    Apply,        // on/off flag of a transform without inner parameters (independent scheme)
    Switch,       // spike-and-slab gate of a transform
    Class,        // class selector v_c
    Partition,    // train/valid selector v_p
    Permutation,  // order of the transforms v_sigma
};

struct VariableSpec {
    std::string name;
    VariableKind kind;
    /// Value that makes the owning transform a no-op (point mass of the off state).
    double default_value = 0.0;
    VariableRole role = VariableRole::Parameter;
    /// Owning transform, -1 for auxiliary variables.
    int transform = -1;
    /// Parameter name on the owning transform.
    std::string param;
};

struct VariableGroup {
    std::string name;
    std::vector<std::size_t> members;
};

enum class Scheme { Independent, SpikeSlab };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& s);

/// Probabilistic model of the augmented input space.
///
/// Augmentation spaces carry the auxiliary class, partition and permutation
/// variables as singleton groups and one group per transform. A generic space
/// (no transforms, no classes) holds plain variables and is used for analytic
/// test functions.
class InputSpaceModel {
public:
    InputSpaceModel(std::vector<VariableSpec> variables, std::vector<VariableGroup> groups, std::size_t n_transforms,
                    std::size_t class_count, Scheme scheme);

    /// Plain independent variables, one singleton group each unless groups are given.
    static InputSpaceModel generic(std::vector<VariableSpec> variables, std::vector<VariableGroup> groups = {});

    const std::vector<VariableSpec>& variables() const { return variables_; }
    const std::vector<VariableGroup>& groups() const { return groups_; }
    std::size_t dimension() const { return variables_.size(); }
    std::size_t group_count() const { return groups_.size(); }
    std::size_t n_transforms() const { return n_transforms_; }
    std::size_t class_count() const { return class_count_; }
    Scheme scheme() const { return scheme_; }
    bool is_generic() const { return generic_; }

    /// Index of the unique variable with the given auxiliary role, or -1.
    int role_index(VariableRole role) const;
    std::size_t group_of(std::size_t variable) const { return group_of_.at(variable); }
    std::size_t group_index(const std::string& name) const;
    std::vector<std::string> group_names() const;

private:
    InputSpaceModel() = default;
    void validate();

    std::vector<VariableSpec> variables_;
    std::vector<VariableGroup> groups_;
    std::vector<std::size_t> group_of_;
    std::size_t n_transforms_ = 0;
    std::size_t class_count_ = 0;
    Scheme scheme_ = Scheme::Independent;
    bool generic_ = false;
};

/// Decoded draw of every variable.
struct Realization {
    /// One value per variable: reals for continuous, integers for discrete and
    /// categorical, 0/1 for switches.
    std::vector<double> values;
    std::size_t class_index = 0;
    /// Position of the class coordinate inside its class cell, in [0, 1);
    /// selects the instance within the class.
    double class_position = 0.0;
    std::size_t partition = 0;
    /// Application order of the transforms.
    std::vector<std::size_t> order;
    /// Spike-and-slab gates per transform (all 1 under the independent scheme).
    std::vector<int> gates;
};

// ---- permutations -------------------------------------------------------

/// d! with an overflow guard (throws DomainError for d > 20).
std::uint64_t factorial(std::size_t d);
/// Lexicographic Lehmer decoding of index in [0, d!) into a permutation of {0..d-1}.
std::vector<std::size_t> permutation_from_index(std::uint64_t index, std::size_t d);
std::uint64_t permutation_index(std::span<const std::size_t> perm);

// ---- low-discrepancy sequence -------------------------------------------

inline constexpr std::size_t kSobolMaxDimension = 1024;

/// Points skip .. skip+n-1 of the Sobol sequence (Joe-Kuo direction numbers,
/// Gray-code order, origin at index 0), row-major n x dim. A nonzero
/// shift_seed applies a random digital shift keyed by that seed.
std::vector<double> sobol_sequence(std::size_t dim, std::size_t n, std::size_t skip = 0,
                                   std::uint64_t shift_seed = 0);

// ---- decoding ------------------------------------------------------------

double decode_variable(const VariableSpec& spec, double u);

/// Independent-scheme decoding of one unit-hypercube row.
Realization scheme1_draw(const InputSpaceModel& space, std::span<const double> u);
/// Spike-and-slab decoding of one unit-hypercube row: gates first, then
/// parameters of gated-on transforms from their marginals, defaults otherwise.
Realization scheme2_decode(const InputSpaceModel& space, std::span<const double> u);
/// Spike-and-slab draw consuming uniforms from a stream.
Realization scheme2_draw(const InputSpaceModel& space, StreamEngine& stream);
/// Decode according to the space's scheme.
Realization decode(const InputSpaceModel& space, std::span<const double> u);

// ---- plans ----------------------------------------------------------------

enum class Design { Saltelli, Shapley };

/// Immutable sampling design. Rows are stored in evaluation order.
///
/// Saltelli rows come in blocks of 2g+2 per base point j:
///   A_j, AB_1j .. AB_gj, BA_1j .. BA_gj, B_j
/// where AB_g takes group g's columns from B and BA_g takes them from A.
///
/// Shapley rows are ordered permutation-major, then prefix length, outer draw,
/// inner draw.
struct SamplePlan {
    Design design = Design::Saltelli;
    std::uint64_t seed = 0;
    std::size_t dim = 0;
    std::size_t groups = 0;
    std::size_t budget = 0;
    std::vector<double> rows;  // budget x dim

    // Saltelli
    std::size_t n_base = 0;

    // Shapley
    std::size_t n_outer = 0;
    std::size_t n_inner = 0;
    std::vector<std::vector<std::size_t>> permutations;

    std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
    std::size_t block_size() const { return 2 * groups + 2; }

    // Saltelli row positions inside block j
    std::size_t row_a(std::size_t j) const { return j * block_size(); }
    std::size_t row_ab(std::size_t j, std::size_t g) const { return j * block_size() + 1 + g; }
    std::size_t row_ba(std::size_t j, std::size_t g) const { return j * block_size() + 1 + groups + g; }
    std::size_t row_b(std::size_t j) const { return j * block_size() + block_size() - 1; }

    // Shapley row position
    std::size_t row_shapley(std::size_t perm, std::size_t prefix, std::size_t outer, std::size_t inner) const {
        return ((perm * groups + prefix) * n_outer + outer) * n_inner + inner;
    }
};

/// Saltelli design with per-group cross matrices. n_base must be a power of 2.
/// seed 0 uses the plain sequence; other seeds apply a digital shift.
SamplePlan saltelli_plan(const InputSpaceModel& space, std::size_t n_base, std::uint64_t seed);

/// Permutation design for Shapley effects over the space's groups. When
/// n_perm >= groups! every permutation is enumerated exactly once.
SamplePlan shapley_plan(const InputSpaceModel& space, std::size_t n_perm, std::size_t n_outer, std::size_t n_inner,
                        std::uint64_t seed);

// ---- budgets ----------------------------------------------------------------

struct SaltelliBudget {
    std::size_t n_base;
    std::size_t groups;
};
struct ShapleyBudget {
    std::size_t n_perm;
    std::size_t groups;
    std::size_t n_outer;
    std::size_t n_inner;
};
struct ScreeningBudget {
    std::size_t n_aug;            // augmentations without inner parameters
    std::size_t n_aug_theta;      // augmentations with inner parameters
    std::size_t m_inner;          // samples per parameterized augmentation
    std::size_t per_class;        // k
    std::size_t n_classes;
};
using BudgetParams = std::variant<SaltelliBudget, ShapleyBudget, ScreeningBudget>;

std::size_t budget(const BudgetParams& params);

}  // namespace augsens
