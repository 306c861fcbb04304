#include "augsens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "augsens/classsense.hpp"
#include "augsens/error.hpp"
#include "augsens/maskeval.hpp"
#include "augsens/parallel.hpp"
#include "augsens/statan.hpp"
#include "json.hpp"

namespace augsens {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kSampleChunk = 1024;
const char* const kHsvNames[3] = {"H", "S", "V"};

std::string chunk_name(const char* prefix, std::size_t k) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s-%05zu.aswt", prefix, k);
    return buf;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string matrix_csv(const std::string& corner, const std::vector<std::string>& rows,
                       const std::vector<std::string>& cols, const std::vector<double>& values,
                       const std::vector<std::uint8_t>& undefined) {
    std::ostringstream os;
    os << corner;
    for (const auto& c : cols) os << "," << c;
    os << "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        os << rows[r];
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const std::size_t k = r * cols.size() + c;
            os << "," << (undefined[k] ? std::string("NA") : num(values[k]));
        }
        os << "\n";
    }
    return os.str();
}

std::string kind_key(SensitivityKind k) { return to_string(k); }

std::vector<std::string> resolve_checkpoints(const Network& net, const std::vector<std::string>& wanted) {
    if (wanted.empty()) return net.checkpoint_names();
    for (const auto& c : wanted) {
        if (!net.has_checkpoint(c)) throw DomainError("network has no checkpoint '" + c + "'");
    }
    // keep network order
    std::vector<std::string> out;
    for (const auto& c : net.checkpoint_names()) {
        if (std::find(wanted.begin(), wanted.end(), c) != wanted.end()) out.push_back(c);
    }
    return out;
}

std::string classifying_checkpoint(const Network& net) {
    for (const auto& c : net.checkpoints()) {
        if (!c.convolutional && c.layer + 1 == net.layers().size()) return c.name;
    }
    return "";
}

/// Rows of a chunked sample or activation stage, loaded chunk by chunk.
class ChunkReader {
public:
    ChunkReader(const ResultStore& store, std::string stage, std::string hash, const char* prefix)
        : store_(store), stage_(std::move(stage)), hash_(std::move(hash)), prefix_(prefix) {}

    void prepare(std::size_t begin, std::size_t end) {
        std::map<std::size_t, aswt::Archive> keep;
        for (std::size_t k = begin / kSampleChunk; k <= (end - 1) / kSampleChunk; ++k) {
            auto it = chunks_.find(k);
            keep.emplace(k, it != chunks_.end() ? std::move(it->second)
                                                : store_.read_archive(stage_, hash_, chunk_name(prefix_, k)));
        }
        chunks_ = std::move(keep);
    }

    /// Row `row` of tensor `name` (leading axis stripped).
    Tensor row(const std::string& name, std::size_t row) const {
        const auto& rec = chunks_.at(row / kSampleChunk).record(name);
        Shape shape(rec.shape.begin() + 1, rec.shape.end());
        const std::size_t n = shape_numel(shape);
        const std::size_t r = row % kSampleChunk;
        return Tensor(shape, std::vector<float>(rec.f32.begin() + static_cast<std::ptrdiff_t>(r * n),
                                                rec.f32.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
    }

private:
    const ResultStore& store_;
    std::string stage_, hash_;
    const char* prefix_;
    std::map<std::size_t, aswt::Archive> chunks_;
};

// Network activations at the layout's checkpoints, concatenated.
void network_units(const Network& net, const std::vector<UnitLayout>& layout, const Tensor& x, std::span<double> out) {
    const auto res = forward_with_checkpoints(net, x);
    std::size_t off = 0;
    for (const auto& l : layout) {
        const auto it = std::find_if(res.records.begin(), res.records.end(),
                                     [&](const ActivationRecord& r) { return r.checkpoint == l.checkpoint; });
        const auto data = it->tensor.data();
        for (std::size_t i = 0; i < data.size(); ++i) out[off + i] = data[i];
        off += data.size();
    }
}

void add_maps(aswt::Archive& ar, const std::vector<SensitivityMap>& maps) {
    for (const auto& m : maps) ar.add(kind_key(m.kind) + "/" + m.checkpoint + "/" + m.group, m.values);
}

// Upper-triangle entries of a correlation matrix with their defined flags.
std::pair<std::vector<double>, std::vector<std::uint8_t>> upper_triangle(const CorrelationMatrix& m) {
    std::vector<double> v;
    std::vector<std::uint8_t> ok;
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            v.push_back(m.at(i, j));
            ok.push_back(m.is_defined(i, j) ? 1 : 0);
        }
    }
    return {v, ok};
}

std::optional<double> triangle_corr(const std::pair<std::vector<double>, std::vector<std::uint8_t>>& a,
                                    const std::pair<std::vector<double>, std::vector<std::uint8_t>>& b) {
    std::vector<double> x, y;
    for (std::size_t k = 0; k < a.first.size(); ++k) {
        if (a.second[k] && b.second[k]) {
            x.push_back(a.first[k]);
            y.push_back(b.first[k]);
        }
    }
    if (x.size() < 3) return std::nullopt;
    return spearman(x, y);
}

}  // namespace

// ---- building blocks -------------------------------------------------------------------------

void fit_readout(Network& net, const Dataset& data, std::size_t jobs) {
    if (net.layers().empty() || !std::holds_alternative<Dense>(net.layers().back())) {
        throw DomainError("readout fitting needs a final dense layer");
    }
    Dense& fc = std::get<Dense>(net.layers().back());
    const std::size_t last = net.layers().size() - 1;
    // the deepest checkpoint feeding the readout
    const Checkpoint* feat = nullptr;
    for (const auto& c : net.checkpoints()) {
        if (c.layer < last && shape_numel(net.checkpoint_shape(c.name)) == fc.n_in) feat = &c;
    }
    if (!feat) throw DomainError("no checkpoint provides the readout features");
    if (fc.n_out != data.class_count()) throw DomainError("readout size does not match the dataset classes");

    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.partition()[i] == kTrain) train.push_back(i);
    }
    if (train.empty()) throw DomainError("readout fitting needs training images");
    std::vector<std::vector<float>> features(train.size());
    const std::string feat_name = feat->name;
    parallel_for(train.size(), jobs, [&](std::size_t k) {
        const auto res = forward_with_checkpoints(net, data.image(train[k]).pixels);
        for (const auto& r : res.records) {
            if (r.checkpoint == feat_name) features[k].assign(r.tensor.data().begin(), r.tensor.data().end());
        }
    });
    const std::size_t C = fc.n_out, D = fc.n_in;
    std::vector<long double> mean(C * D, 0.0L);
    std::vector<std::size_t> count(C, 0);
    for (std::size_t k = 0; k < train.size(); ++k) {
        const std::size_t c = data.labels()[train[k]];
        ++count[c];
        for (std::size_t d = 0; d < D; ++d) mean[c * D + d] += features[k][d];
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (count[c] == 0) throw DomainError("readout fitting: class without training images");
        long double sq = 0;
        for (std::size_t d = 0; d < D; ++d) sq += mean[c * D + d] * mean[c * D + d];
        const long double norm = std::sqrt(sq);
        if (norm == 0) throw DomainError("readout fitting: class centroid is zero");
        for (std::size_t d = 0; d < D; ++d) fc.weight[c * D + d] = static_cast<float>(mean[c * D + d] / norm);
        fc.bias[c] = 0.0f;
    }
}

Image realize_sample(const Dataset& data, const AugmentationSet& set, const Realization& r) {
    const std::size_t idx = data.select(r.class_index, r.partition, r.class_position);
    return set.apply(data.image(idx), r);
}

SensitivityResult estimate_sensitivity(const SamplePlan& plan, const std::vector<UnitLayout>& layout,
                                       const std::vector<std::string>& group_names, const UnitFunction& f,
                                       std::size_t jobs, const std::function<void(std::size_t, std::size_t)>& prepare) {
    const std::size_t units = layout_units(layout);
    if (units == 0) throw DomainError("no units to analyse");
    if (group_names.size() != plan.groups) throw ShapeError("group names do not match the plan");
    const bool saltelli = plan.design == Design::Saltelli;
    const std::size_t step = saltelli ? plan.block_size() : plan.n_inner;
    const std::size_t per_chunk = step * std::max<std::size_t>(1, 256 / step);

    std::optional<SaltelliAccumulator> sa;
    std::optional<ShapleyAccumulator> sh;
    if (saltelli) {
        sa.emplace(plan, units, jobs);
    } else {
        sh.emplace(plan, units, jobs);
    }
    MomentAccumulator moments(units);
    std::vector<double> buf(per_chunk * units);
    for (std::size_t start = 0; start < plan.budget; start += per_chunk) {
        const std::size_t n = std::min(per_chunk, plan.budget - start);
        if (prepare) prepare(start, start + n);
        parallel_for(n, jobs, [&](std::size_t i) { f(start + i, std::span<double>(buf.data() + i * units, units)); });
        for (std::size_t i = 0; i < n; i += step) {
            const std::span<const double> block(buf.data() + i * units, step * units);
            if (saltelli) {
                sa->add_block(block);
            } else {
                sh->add_cell(block);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = start + i;
            bool independent;
            if (saltelli) {
                const std::size_t pos = row % step;
                independent = pos == 0 || pos == step - 1;
            } else {
                const std::size_t cell = row / plan.n_inner;
                independent = (cell % (plan.groups * plan.n_outer)) / plan.n_outer == plan.groups - 1;
            }
            if (independent) moments.add(std::span<const double>(buf.data() + i * units, units));
        }
    }
    SensitivityResult out;
    out.layout = layout;
    out.groups = group_names;
    out.rows = plan.budget;
    out.stats = moments.finish();
    if (saltelli) {
        const SobolEstimate est = sa->finish();
        out.maps = split_sobol(est, layout, group_names);
        out.dead = est.dead;
        out.group_inert = est.group_inert;
    } else {
        const ShapleyEstimate est = sh->finish();
        out.maps = split_shapley(est, layout, group_names);
        out.dead = est.dead;
    }
    return out;
}

std::vector<double> spatial_average(const Tensor& map) {
    const auto data = map.data();
    if (map.rank() == 3) {
        const std::size_t C = map.dim(0), n = map.dim(1) * map.dim(2);
        std::vector<double> out(C);
        for (std::size_t c = 0; c < C; ++c) {
            long double s = 0;
            for (std::size_t k = 0; k < n; ++k) s += data[c * n + k];
            out[c] = static_cast<double>(s / static_cast<long double>(n));
        }
        return out;
    }
    return std::vector<double>(data.begin(), data.end());
}

CorrelationMatrix variable_correlation(const std::vector<const SensitivityMap*>& maps) {
    if (maps.empty()) throw DomainError("no maps to correlate");
    std::vector<std::vector<double>> cols;
    std::vector<std::string> labels;
    for (const auto* m : maps) {
        cols.push_back(spatial_average(m->values));
        labels.push_back(m->group);
        if (cols.back().size() != cols.front().size()) throw ShapeError("maps cover different checkpoints");
    }
    const std::size_t units = cols.front().size();
    std::vector<double> table(units * cols.size());
    for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t v = 0; v < cols.size(); ++v) table[u * cols.size() + v] = cols[v][u];
    }
    return spearman_matrix(table, units, labels);
}

Tensor segment_input(const Image& rgb, std::size_t channel, const Shape& shape) {
    if (shape.size() != 3) throw ShapeError("segment inputs must be C x H x W");
    const Image hsv = rgb_to_hsv(rgb);
    Image plane = channel_repeat(hsv, channel, 1);
    if (plane.height() != shape[1] || plane.width() != shape[2]) plane = area_resize(plane, shape[1], shape[2]);
    return channel_repeat(plane, 0, shape[0]).pixels;
}

std::string segment_start(const Network& net, const std::string& to) {
    const Checkpoint& end = net.find_checkpoint(to);
    if (!end.convolutional) throw DomainError("segments end at convolutional checkpoints");
    std::string start = kInputCheckpoint;
    for (const auto& c : net.checkpoints()) {
        if (c.layer < end.layer && c.convolutional) start = c.name;
    }
    return start;
}

// ---- pipeline --------------------------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig cfg, std::size_t jobs, std::ostream* log)
    : cfg_(std::move(cfg)), jobs_(std::max<std::size_t>(1, jobs)), log_(log), store_(cfg_.output) {
    cfg_.validate();
}

Pipeline::~Pipeline() = default;

void Pipeline::note(const std::string& line) {
    if (log_) *log_ << line << "\n";
}

std::string Pipeline::dataset_key() const {
    if (cfg_.dataset == "desk") {
        return "desk|" + std::to_string(cfg_.dataset_seed) + "|" + std::to_string(cfg_.classes) + "|" +
               std::to_string(cfg_.per_class) + "|" + std::to_string(cfg_.height) + "|" + std::to_string(cfg_.width);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(cfg_.resolve(cfg_.dataset))) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc = "folder";
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        acc += "|" + fs::relative(f, cfg_.resolve(cfg_.dataset)).generic_string() + ":" + content_hash(ss.str());
    }
    return content_hash(acc);
}

std::string Pipeline::network_key() const {
    if (cfg_.network == "tinynet-a") {
        return "tinynet-a|" + std::to_string(cfg_.network_seed) + "|" + dataset_key();
    }
    std::ifstream in(cfg_.resolve(cfg_.network), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return "weights|" + content_hash(ss.str());
}

std::string Pipeline::stage_hash(const std::string& stage) const {
    ordered_json j;
    j["stage"] = stage;
    j["schema"] = kManifestSchema;
    if (stage == "plan") {
        j["design"] = cfg_.design;
        j["n_base"] = cfg_.n_base;
        j["n_perm"] = cfg_.n_perm;
        j["n_outer"] = cfg_.n_outer;
        j["n_inner"] = cfg_.n_inner;
        j["augmentation"] = cfg_.augmentation;
        j["scheme"] = to_string(cfg_.scheme);
        j["switch_threshold"] = cfg_.switch_threshold;
        j["space"] = {cfg_.classes, cfg_.height, cfg_.width};
        j["seed"] = cfg_.seed;
    } else if (stage == "sample") {
        j["plan"] = stage_hash("plan");
        j["dataset"] = dataset_key();
    } else if (stage == "infer") {
        j["sample"] = stage_hash("sample");
        j["network"] = network_key();
        j["checkpoints"] = cfg_.checkpoints;
        j["persist"] = cfg_.persist_activations;
    } else if (stage == "estimate") {
        j["infer"] = stage_hash("infer");
    } else if (stage == "mask-eval") {
        j["estimate"] = stage_hash("estimate");
        j["kind"] = cfg_.resolved_mask_kind();
        j["images"] = cfg_.mask_images_per_class;
        j["repeats"] = cfg_.condition_repeats;
        j["conditions"] = cfg_.conditions;
        j["variables"] = cfg_.mask_variables;
        j["seed"] = cfg_.seed;
    } else if (stage == "class-sense") {
        j["estimate"] = stage_hash("estimate");
        j["kind"] = cfg_.resolved_mask_kind();
        j["images"] = cfg_.mask_images_per_class;
        j["top_k"] = cfg_.top_k;
        j["trials"] = cfg_.mc_trials;
        j["seed"] = cfg_.seed;
    } else if (stage == "segment") {
        j["estimate"] = stage_hash("estimate");
        j["segments"] = cfg_.segments;
    } else if (stage == "report") {
        j["estimate"] = stage_hash("estimate");
        j["lda"] = {cfg_.lda_folds, cfg_.lda_repeats, cfg_.lda_shrinkage};
        j["seed"] = cfg_.seed;
        for (const char* s : {"mask-eval", "class-sense", "segment"}) {
            const std::string h = stage_hash(s);
            j[s] = store_.complete(s, h) ? h : "";
        }
    } else {
        throw DomainError("unknown stage '" + stage + "'");
    }
    return content_hash(j.dump());
}

void Pipeline::require(const std::string& stage) {
    if (!store_.complete(stage, stage_hash(stage))) {
        throw StageDependencyError("stage '" + stage + "' has not been run for this configuration; run `augsens " +
                                   stage + "` first");
    }
}

StageResult Pipeline::done(const std::string& stage, bool reused) {
    const std::string h = stage_hash(stage);
    note(stage + " " + h + (reused ? " (up to date)" : " (written)"));
    return {stage, h, store_.stage_dir(stage, h), reused};
}

const Dataset& Pipeline::dataset() {
    if (!dataset_) {
        if (cfg_.dataset == "desk") {
            dataset_ = std::make_unique<Dataset>(
                desk_dataset({cfg_.dataset_seed, cfg_.classes, cfg_.per_class, cfg_.height, cfg_.width}));
        } else {
            dataset_ = std::make_unique<Dataset>(load_image_folder(cfg_.resolve(cfg_.dataset)));
        }
        if (dataset_->class_count() != cfg_.classes) {
            throw DomainError("dataset has " + std::to_string(dataset_->class_count()) + " classes, config says " +
                              std::to_string(cfg_.classes));
        }
    }
    return *dataset_;
}

const Network& Pipeline::network() {
    if (!network_) {
        auto net = std::make_unique<Network>(tinynet_a(cfg_.classes, cfg_.network_seed, cfg_.height, cfg_.width));
        if (cfg_.network == "tinynet-a") {
            fit_readout(*net, dataset(), jobs_);
        } else {
            for (const auto& w : load_weights(*net, cfg_.resolve(cfg_.network))) note("warning: " + w);
        }
        net->validate();
        network_ = std::move(net);
    }
    return *network_;
}

const AugmentationSet& Pipeline::augmentation_set() {
    if (!set_) {
        AugmentationOptions o{cfg_.scheme, cfg_.classes, cfg_.height, cfg_.width, cfg_.switch_threshold};
        set_ = std::make_unique<AugmentationSet>(make_augmentation_set(cfg_.augmentation, o));
    }
    return *set_;
}

const SamplePlan& Pipeline::sample_plan() {
    if (!plan_) {
        const auto& space = augmentation_set().space;
        plan_ = std::make_unique<SamplePlan>(
            cfg_.design == "saltelli" ? saltelli_plan(space, cfg_.n_base, cfg_.seed)
                                      : shapley_plan(space, cfg_.n_perm, cfg_.n_outer, cfg_.n_inner, cfg_.seed));
    }
    return *plan_;
}

std::vector<UnitLayout> Pipeline::layout() {
    const Network& net = network();
    std::vector<UnitLayout> out;
    for (const auto& c : resolve_checkpoints(net, cfg_.checkpoints)) out.push_back({c, net.checkpoint_shape(c)});
    return out;
}

StageResult Pipeline::plan() {
    const std::string h = stage_hash("plan");
    if (store_.complete("plan", h)) return done("plan", true);
    const SamplePlan& p = sample_plan();
    ResultStore::Writer w(store_, "plan", h);
    aswt::Archive ar;
    ar.add_f64("rows", {p.budget, p.dim}, p.rows);
    if (!p.permutations.empty()) {
        std::vector<double> perms;
        for (const auto& perm : p.permutations) perms.insert(perms.end(), perm.begin(), perm.end());
        ar.add_f64("permutations", {p.permutations.size(), p.groups}, perms);
    }
    w.add_archive("plan.aswt", ar);
    ordered_json meta{{"design", cfg_.design},  {"budget", p.budget},      {"dim", p.dim},
                      {"groups", augmentation_set().space.group_names()}, {"n_base", p.n_base},
                      {"n_outer", p.n_outer},   {"n_inner", p.n_inner},    {"permutations", p.permutations.size()}};
    w.commit(config_json(cfg_), meta.dump());
    return done("plan", false);
}

StageResult Pipeline::sample() {
    require("plan");
    const std::string h = stage_hash("sample");
    if (store_.complete("sample", h)) return done("sample", true);
    const SamplePlan& p = sample_plan();
    const auto& set = augmentation_set();
    const Dataset& data = dataset();
    const Shape img_shape = data.image(0).pixels.shape();
    ResultStore::Writer w(store_, "sample", h);
    std::size_t chunks = 0;
    for (std::size_t start = 0; start < p.budget; start += kSampleChunk, ++chunks) {
        const std::size_t n = std::min(kSampleChunk, p.budget - start);
        const std::size_t numel = shape_numel(img_shape);
        std::vector<float> pixels(n * numel);
        std::vector<double> source(n * 3);
        parallel_for(n, jobs_, [&](std::size_t i) {
            const Realization r = decode(set.space, p.row(start + i));
            const Image img = realize_sample(data, set, r);
            std::copy(img.pixels.data().begin(), img.pixels.data().end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * numel));
            source[i * 3] = static_cast<double>(r.class_index);
            source[i * 3 + 1] = static_cast<double>(r.partition);
            source[i * 3 + 2] = static_cast<double>(data.select(r.class_index, r.partition, r.class_position));
        });
        Shape shape{n};
        shape.insert(shape.end(), img_shape.begin(), img_shape.end());
        aswt::Archive ar;
        ar.add("images", Tensor(shape, std::move(pixels)));
        ar.add_f64("source", {n, 3}, std::move(source));
        w.add_archive(chunk_name("samples", chunks), ar);
    }
    ordered_json meta{{"rows", p.budget}, {"chunks", chunks}, {"chunk_rows", kSampleChunk},
                      {"augmentation", set.id}, {"inert", set.inert}};
    w.commit(config_json(cfg_), meta.dump());
    return done("sample", false);
}

StageResult Pipeline::infer() {
    require("sample");
    const std::string h = stage_hash("infer");
    if (store_.complete("infer", h)) return done("infer", true);
    const SamplePlan& p = sample_plan();
    const Network& net = network();
    const auto lay = layout();
    ResultStore::Writer w(store_, "infer", h);
    ordered_json meta{{"mode", cfg_.persist_activations ? "persisted" : "streaming"}};
    ordered_json cks = ordered_json::array();
    for (const auto& l : lay) cks.push_back({{"checkpoint", l.checkpoint}, {"shape", l.shape}});
    meta["checkpoints"] = cks;
    if (cfg_.persist_activations) {
        ChunkReader samples(store_, "sample", stage_hash("sample"), "samples");
        std::size_t chunks = 0;
        for (std::size_t start = 0; start < p.budget; start += kSampleChunk, ++chunks) {
            const std::size_t n = std::min(kSampleChunk, p.budget - start);
            samples.prepare(start, start + n);
            std::vector<std::vector<float>> acts(lay.size());
            for (std::size_t c = 0; c < lay.size(); ++c) acts[c].resize(n * shape_numel(lay[c].shape));
            parallel_for(n, jobs_, [&](std::size_t i) {
                const auto res = forward_with_checkpoints(net, samples.row("images", start + i), nullptr, start + i);
                for (std::size_t c = 0; c < lay.size(); ++c) {
                    for (const auto& r : res.records) {
                        if (r.checkpoint != lay[c].checkpoint) continue;
                        std::copy(r.tensor.data().begin(), r.tensor.data().end(),
                                  acts[c].begin() + static_cast<std::ptrdiff_t>(i * r.tensor.size()));
                    }
                }
            });
            aswt::Archive ar;
            for (std::size_t c = 0; c < lay.size(); ++c) {
                Shape shape{n};
                shape.insert(shape.end(), lay[c].shape.begin(), lay[c].shape.end());
                ar.add(lay[c].checkpoint, Tensor(shape, std::move(acts[c])));
            }
            w.add_archive(chunk_name("activations", chunks), ar);
        }
        meta["chunks"] = chunks;
    }
    w.commit(config_json(cfg_), meta.dump());
    return done("infer", false);
}

StageResult Pipeline::estimate() {
    require("infer");
    const std::string h = stage_hash("estimate");
    if (store_.complete("estimate", h)) return done("estimate", true);
    const SamplePlan& p = sample_plan();
    const Network& net = network();
    const auto lay = layout();
    const auto groups = augmentation_set().space.group_names();

    SensitivityResult res;
    if (cfg_.persist_activations) {
        ChunkReader acts(store_, "infer", stage_hash("infer"), "activations");
        res = estimate_sensitivity(
            p, lay, groups,
            [&](std::size_t row, std::span<double> out) {
                std::size_t off = 0;
                for (const auto& l : lay) {
                    const Tensor t = acts.row(l.checkpoint, row);
                    for (std::size_t i = 0; i < t.size(); ++i) out[off + i] = t[i];
                    off += t.size();
                }
            },
            jobs_, [&](std::size_t b, std::size_t e) { acts.prepare(b, e); });
    } else {
        ChunkReader samples(store_, "sample", stage_hash("sample"), "samples");
        res = estimate_sensitivity(
            p, lay, groups,
            [&](std::size_t row, std::span<double> out) { network_units(net, lay, samples.row("images", row), out); },
            jobs_, [&](std::size_t b, std::size_t e) { samples.prepare(b, e); });
    }

    aswt::Archive ar;
    add_maps(ar, res.maps);
    std::size_t off = 0;
    ordered_json dead = ordered_json::object();
    for (const auto& l : lay) {
        const std::size_t n = shape_numel(l.shape);
        std::vector<double> mean(n), var(n), cov(n);
        std::vector<float> dead_f(n);
        std::size_t dead_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = res.stats[off + i];
            mean[i] = s.mean;
            var[i] = s.variance;
            cov[i] = s.cov.value_or(0.0);
            dead_f[i] = res.dead[off + i] ? 1.0f : 0.0f;
            dead_count += res.dead[off + i];
        }
        ar.add_f64("mean/" + l.checkpoint, l.shape, mean);
        ar.add_f64("variance/" + l.checkpoint, l.shape, var);
        ar.add_f64("cov/" + l.checkpoint, l.shape, cov);
        ar.add("dead/" + l.checkpoint, Tensor(l.shape, dead_f));
        if (p.design == Design::Shapley) {
            // per-unit total variance the Shapley values sum to
            for (const auto& m : res.maps) {
                if (m.checkpoint == l.checkpoint) {
                    ar.add_f64("total_variance/" + l.checkpoint, l.shape, m.total_variance);
                    break;
                }
            }
        }
        dead[l.checkpoint] = dead_count;
        off += n;
    }
    ResultStore::Writer w(store_, "estimate", h);
    w.add_archive("maps.aswt", ar);
    ordered_json meta{{"design", cfg_.design}, {"groups", groups}, {"rows", res.rows}, {"dead_units", dead}};
    if (p.design == Design::Saltelli) {
        ordered_json inert = ordered_json::object();
        bool all_aug_dead = true;
        const auto& set = augmentation_set();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            inert[groups[g]] = static_cast<bool>(res.group_inert[g]);
            const bool is_aug = std::any_of(set.transforms.begin(), set.transforms.end(),
                                            [&](TransformKind k) { return to_string(k) == groups[g]; });
            if (is_aug && !res.group_inert[g]) all_aug_dead = false;
        }
        meta["group_inert"] = inert;
        meta["augmentation_groups_dead"] = all_aug_dead;
        if (all_aug_dead) note("all augmentation groups are dead (no augmentation contribution)");
    }
    w.commit(config_json(cfg_), meta.dump());
    return done("estimate", false);
}

std::vector<SensitivityMap> Pipeline::load_maps(SensitivityKind kind) {
    require("estimate");
    const auto ar = store_.read_archive("estimate", stage_hash("estimate"), "maps.aswt");
    const auto lay = layout();
    std::vector<SensitivityMap> maps;
    const std::string prefix = kind_key(kind) + "/";
    for (const auto& l : lay) {
        std::vector<double> tv = ar.values_f64((kind == SensitivityKind::Shapley ? "total_variance/" : "variance/") +
                                               l.checkpoint);
        const Tensor dead = ar.tensor("dead/" + l.checkpoint);
        std::vector<std::uint8_t> dead_u(dead.size());
        for (std::size_t i = 0; i < dead.size(); ++i) dead_u[i] = dead[i] != 0.0f;
        for (const auto& g : augmentation_set().space.group_names()) {
            const std::string name = prefix + l.checkpoint + "/" + g;
            if (!ar.contains(name)) {
                throw StageDependencyError("estimate stage holds no " + kind_key(kind) + " maps (design '" +
                                           cfg_.design + "')");
            }
            maps.push_back({l.checkpoint, kind, g, ar.tensor(name), tv, dead_u});
        }
    }
    return maps;
}

StageResult Pipeline::mask_eval() {
    require("estimate");
    const std::string h = stage_hash("mask-eval");
    if (store_.complete("mask-eval", h)) return done("mask-eval", true);
    const Network& net = network();
    const auto& set = augmentation_set();
    const Dataset& data = dataset();
    const auto maps = load_maps(sensitivity_kind_from_string(cfg_.resolved_mask_kind()));

    VariableMaps vmaps;
    for (const auto& m : maps) {
        if (!net.find_checkpoint(m.checkpoint).convolutional) continue;
        if (!cfg_.mask_variables.empty() &&
            std::find(cfg_.mask_variables.begin(), cfg_.mask_variables.end(), m.group) == cfg_.mask_variables.end()) {
            continue;
        }
        vmaps[m.group][m.checkpoint] = normalize_map(m);
    }
    if (vmaps.empty()) throw DomainError("no convolutional maps selected for masking");
    std::vector<InputCondition> conds;
    for (const auto& c : input_conditions(set, cfg_.condition_repeats)) {
        if (cfg_.conditions.empty() || c.name == "none" ||
            std::find(cfg_.conditions.begin(), cfg_.conditions.end(), c.name) != cfg_.conditions.end()) {
            conds.push_back(c);
        }
    }
    const auto subset = data.validation_subset(cfg_.mask_images_per_class);
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    for (std::size_t i : subset) {
        images.push_back(data.image(i));
        labels.push_back(data.labels()[i]);
    }
    const auto grid = study_grid();
    note("mask-eval: " + std::to_string(conds.size()) + " conditions x " + std::to_string(vmaps.size()) +
         " variables x " + std::to_string(grid.size()) + " masks on " + std::to_string(images.size()) + " images");
    const auto reports = accuracy_features(net, images, labels, set, conds, vmaps, grid, {cfg_.seed, cfg_.condition_repeats, jobs_});
    const auto match = match_correlation(reports);

    ResultStore::Writer w(store_, "mask-eval", h);
    w.add_text("reports.csv", reports_csv(reports));
    w.add_text("match.csv", match_csv(match));
    ordered_json baseline = ordered_json::object();
    for (const auto& r : reports) baseline[r.input_condition] = r.unmasked_accuracy;
    ordered_json labels_j = ordered_json::array();
    for (const auto& g : grid) labels_j.push_back(g.label());
    ordered_json meta{{"kind", cfg_.resolved_mask_kind()},     {"grid", labels_j}, {"grid_size", grid.size()},
                      {"images", images.size()},    {"baseline_accuracy", baseline},
                      {"layout", {{"reports.csv", "accuracy-by-mask-grid"}, {"match.csv", "augmentation-vs-mask-variable correlation"}}}};
    w.commit(config_json(cfg_), meta.dump());
    return done("mask-eval", false);
}

StageResult Pipeline::class_sense() {
    require("estimate");
    const std::string h = stage_hash("class-sense");
    if (store_.complete("class-sense", h)) return done("class-sense", true);
    const Network& net = network();
    const auto& set = augmentation_set();
    const Dataset& data = dataset();
    const auto kind = sensitivity_kind_from_string(cfg_.resolved_mask_kind());
    if (kind == SensitivityKind::SobolTotal) {
        throw DomainError("single-class analysis uses first-order Sobol or Shapley maps, not total indices");
    }
    const std::string logits = classifying_checkpoint(net);
    const auto lay = layout();
    if (logits.empty() || std::none_of(lay.begin(), lay.end(), [&](const UnitLayout& l) { return l.checkpoint == logits; })) {
        throw RefusalError("single-class analysis needs the classifying-layer map; add checkpoint '" +
                           (logits.empty() ? std::string("<classifier>") : logits) + "' to the analysed checkpoints");
    }
    if (cfg_.top_k > net.class_count()) throw DomainError("top_k exceeds the class count");
    const auto maps = load_maps(kind);
    const auto subset = data.validation_subset(cfg_.mask_images_per_class);
    std::vector<Image> images;
    for (std::size_t i : subset) images.push_back(data.image(i));
    const std::size_t per_class = (images.size() + net.class_count() - 1) / net.class_count();
    const ThresholdResult thr = mc_threshold(net.class_count(), cfg_.top_k, per_class, cfg_.mc_trials, cfg_.seed, jobs_);
    note("class-sense: tau = " + num(thr.tau) + " (q1 " + num(thr.q1) + ", q3 " + num(thr.q3) + ")");

    std::vector<JaccardReport> reports;
    for (TransformKind t : set.transforms) {
        const std::string g = to_string(t);
        std::map<std::string, Tensor> normalized;
        const SensitivityMap* logit_map = nullptr;
        for (const auto& m : maps) {
            if (m.group != g) continue;
            if (m.checkpoint == logits) logit_map = &m;
            else if (net.find_checkpoint(m.checkpoint).convolutional) normalized[m.checkpoint] = normalize_map(m);
        }
        const auto sensitive = topk_sensitive(*logit_map, cfg_.top_k);
        std::vector<std::pair<MaskVariant, MaskSet>> masks;
        for (const auto& v : bias_grid()) masks.emplace_back(v, build_masks(net, normalized, v));
        reports.push_back(bias_report(net, images, g, kind, sensitive, masks, thr, jobs_));
    }
    ResultStore::Writer w(store_, "class-sense", h);
    w.add_text("jaccard.csv", jaccard_csv(reports));
    ordered_json meta{{"kind", cfg_.resolved_mask_kind()}, {"N", thr.N},       {"n", thr.n},   {"s", thr.s},
                      {"trials", thr.trials},   {"q1", thr.q1},     {"q3", thr.q3}, {"tau", thr.tau},
                      {"layout", {{"jaccard.csv", "bias-jaccard by augmentation and quantile"}}}};
    w.commit(config_json(cfg_), meta.dump());
    return done("class-sense", false);
}

StageResult Pipeline::segment() {
    require("estimate");
    const std::string h = stage_hash("segment");
    if (store_.complete("segment", h)) return done("segment", true);
    const Network& net = network();
    const SamplePlan& p = sample_plan();
    const auto groups = augmentation_set().space.group_names();
    const auto kind = p.design == Design::Saltelli ? SensitivityKind::SobolFirst : SensitivityKind::Shapley;

    std::vector<std::string> ends = cfg_.segments;
    if (ends.empty()) {
        for (const auto& l : layout()) {
            if (net.find_checkpoint(l.checkpoint).convolutional) ends.push_back(l.checkpoint);
        }
    }
    const auto original = load_maps(kind);
    ChunkReader samples(store_, "sample", stage_hash("sample"), "samples");

    aswt::Archive ar;
    // correlation matrices: (channel, end) and originals per end
    std::map<std::pair<std::size_t, std::string>, CorrelationMatrix> seg_corr;
    std::map<std::string, CorrelationMatrix> orig_corr;
    for (const auto& to : ends) {
        const std::string from = segment_start(net, to);
        const Shape in_shape = net.checkpoint_shape(from);
        const std::vector<UnitLayout> lay{{to, net.checkpoint_shape(to)}};
        std::vector<const SensitivityMap*> orig;
        for (const auto& m : original) {
            if (m.checkpoint == to) orig.push_back(&m);
        }
        if (orig.empty()) throw StageDependencyError("no original maps for checkpoint '" + to + "'");
        orig_corr.emplace(to, variable_correlation(orig));
        for (std::size_t ch = 0; ch < 3; ++ch) {
            note("segment " + from + " -> " + to + " on " + kHsvNames[ch]);
            auto res = estimate_sensitivity(
                p, lay, groups,
                [&](std::size_t row, std::span<double> out) {
                    const Image rgb(samples.row("images", row));
                    const Tensor y = run_segment(net, from, to, segment_input(rgb, ch, in_shape));
                    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i];
                },
                jobs_, [&](std::size_t b, std::size_t e) { samples.prepare(b, e); });
            std::vector<const SensitivityMap*> mine;
            for (auto& m : res.maps) {
                if (m.kind != kind) continue;
                ar.add(std::string(kHsvNames[ch]) + "/" + kind_key(kind) + "/" + to + "/" + m.group, m.values);
                mine.push_back(&m);
            }
            seg_corr.emplace(std::make_pair(ch, to), variable_correlation(mine));
        }
    }

    // within a fixed channel: segment end x segment end
    std::ostringstream within;
    within << "channel,checkpoint";
    for (const auto& b : ends) within << "," << b;
    within << "\n";
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (const auto& a : ends) {
            within << kHsvNames[ch] << "," << a;
            for (const auto& b : ends) {
                const auto r = triangle_corr(upper_triangle(seg_corr.at({ch, a})), upper_triangle(seg_corr.at({ch, b})));
                within << "," << (r ? num(*r) : std::string("NA"));
            }
            within << "\n";
        }
    }
    // isolated (channel, end) x original checkpoint
    std::vector<std::string> rows;
    std::vector<double> vals;
    std::vector<std::uint8_t> undef;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (const auto& a : ends) {
            rows.push_back(std::string(kHsvNames[ch]) + ":" + a);
            for (const auto& b : ends) {
                const auto r = triangle_corr(upper_triangle(seg_corr.at({ch, a})), upper_triangle(orig_corr.at(b)));
                vals.push_back(r.value_or(0.0));
                undef.push_back(r ? 0 : 1);
            }
        }
    }
    ResultStore::Writer w(store_, "segment", h);
    w.add_archive("segment_maps.aswt", ar);
    w.add_text("segment_within.csv", within.str());
    w.add_text("segment_original.csv", matrix_csv("segment", rows, ends, vals, undef));
    ordered_json meta{{"kind", kind_key(kind)}, {"segments", ends},
                      {"layout", {{"segment_within.csv", "single-channel segment cross-correlation"},
                                  {"segment_original.csv", "single-channel vs original cross-correlation"}}}};
    w.commit(config_json(cfg_), meta.dump());
    return done("segment", false);
}

StageResult Pipeline::report() {
    require("estimate");
    const std::string h = stage_hash("report");
    if (store_.complete("report", h)) return done("report", true);
    const Network& net = network();
    const auto lay = layout();
    const auto groups = augmentation_set().space.group_names();
    const auto estimate_hash = stage_hash("estimate");
    const auto ar = store_.read_archive("estimate", estimate_hash, "maps.aswt");
    const bool saltelli = cfg_.design == "saltelli";
    const auto primary = saltelli ? SensitivityKind::SobolFirst : SensitivityKind::Shapley;
    std::vector<SensitivityKind> kinds = saltelli ? std::vector{SensitivityKind::SobolFirst, SensitivityKind::SobolTotal}
                                                  : std::vector{SensitivityKind::Shapley};

    ResultStore::Writer w(store_, "report", h);
    ordered_json tables = ordered_json::array();
    ordered_json skipped = ordered_json::array();

    // variable correlation matrices and dendrograms
    for (const auto kind : kinds) {
        const auto maps = load_maps(kind);
        for (const auto& l : lay) {
            std::vector<const SensitivityMap*> sel;
            for (const auto& m : maps) {
                if (m.checkpoint == l.checkpoint) sel.push_back(&m);
            }
            const std::string tag = kind_key(kind) + "_" + l.checkpoint;
            if (spatial_average(sel.front()->values).size() < 3) {
                skipped.push_back("corr_" + tag + ": fewer than 3 units");
                continue;
            }
            const auto corr = variable_correlation(sel);
            w.add_text("corr_" + tag + ".csv", matrix_csv("variable", corr.labels, corr.labels, corr.values, corr.undefined));
            tables.push_back({{"file", "corr_" + tag + ".csv"}, {"layout", "variable correlation matrix"}});
            try {
                const auto dendro = average_linkage(corr_to_distance(corr));
                std::ostringstream os;
                os << "a,b,height,size\n";
                for (const auto& m : dendro.merges) os << m.a << "," << m.b << "," << num(m.height) << "," << m.size << "\n";
                w.add_text("dendrogram_" + tag + ".csv", os.str());
                ordered_json tree{{"labels", dendro.labels}, {"complete", dendro.complete}, {"merges", ordered_json::array()}};
                for (const auto& m : dendro.merges) tree["merges"].push_back({m.a, m.b, m.height, m.size});
                w.add_text("dendrogram_" + tag + ".json", tree.dump(1) + "\n");
                tables.push_back({{"file", "dendrogram_" + tag + ".csv"}, {"layout", "average-linkage merge tree"}});
            } catch (const DomainError& e) {
                skipped.push_back("dendrogram_" + tag + ": " + e.what());
            }
        }
    }

    // spatial correlation against CoV, and LDA over per-pixel maps
    const auto maps = load_maps(primary);
    std::ostringstream spatial;
    spatial << "checkpoint,variable,y,x,rho\n";
    for (const auto& l : lay) {
        if (!net.find_checkpoint(l.checkpoint).convolutional || l.shape.size() != 3) continue;
        const auto cov64 = ar.values_f64("cov/" + l.checkpoint);
        Tensor cov(l.shape);
        for (std::size_t i = 0; i < cov.size(); ++i) cov[i] = static_cast<float>(cov64[i]);
        const std::size_t C = l.shape[0], H = l.shape[1], W = l.shape[2];
        std::vector<double> features;
        std::vector<std::size_t> labels;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const auto it = std::find_if(maps.begin(), maps.end(), [&](const SensitivityMap& m) {
                return m.checkpoint == l.checkpoint && m.group == groups[g];
            });
            if (C >= 3) {
                const auto rho = spatial_corr_map(it->values, cov);
                for (std::size_t y = 0; y < H; ++y) {
                    for (std::size_t x = 0; x < W; ++x) {
                        const auto& r = rho[y * W + x];
                        spatial << l.checkpoint << "," << groups[g] << "," << y << "," << x << ","
                                << (r ? num(*r) : std::string("NA")) << "\n";
                    }
                }
            }
            const auto v = it->values.data();
            for (std::size_t c = 0; c < C; ++c) {
                features.insert(features.end(), v.begin() + static_cast<std::ptrdiff_t>(c * H * W),
                                v.begin() + static_cast<std::ptrdiff_t>((c + 1) * H * W));
                labels.push_back(g);
            }
        }
        if (C < cfg_.lda_folds) {
            skipped.push_back("lda_" + l.checkpoint + ": fewer channels than folds");
            continue;
        }
        LdaOptions o{cfg_.lda_folds, cfg_.lda_repeats, cfg_.seed, cfg_.lda_shrinkage, jobs_};
        const auto cm = lda_confusion(features, H * W, labels, groups, o);
        const auto rates = cm.rates();
        w.add_text("lda_" + l.checkpoint + "_counts.csv",
                   matrix_csv("true\\predicted", groups, groups, cm.counts, std::vector<std::uint8_t>(cm.counts.size(), 0)));
        w.add_text("lda_" + l.checkpoint + "_rates.csv",
                   matrix_csv("true\\predicted", groups, groups, rates, std::vector<std::uint8_t>(rates.size(), 0)));
        tables.push_back({{"file", "lda_" + l.checkpoint + "_rates.csv"}, {"layout", "LDA confusion matrix"},
                          {"accuracy", cm.accuracy()}});
    }
    w.add_text("spatial_corr.csv", spatial.str());
    tables.push_back({{"file", "spatial_corr.csv"}, {"layout", "long-format spatial correlation maps"}});

    // downstream series, when present
    const std::pair<const char*, std::vector<std::pair<std::string, std::string>>> series[] = {
        {"mask-eval", {{"reports.csv", "accuracy-by-mask-grid"}, {"match.csv", "augmentation-vs-mask-variable correlation"}}},
        {"class-sense", {{"jaccard.csv", "bias-jaccard by augmentation and quantile"}}},
        {"segment", {{"segment_within.csv", "single-channel segment cross-correlation"},
                     {"segment_original.csv", "single-channel vs original cross-correlation"}}}};
    for (const auto& [stage, files] : series) {
        const std::string sh = stage_hash(stage);
        if (!store_.complete(stage, sh)) {
            skipped.push_back(std::string(stage) + ": not run");
            continue;
        }
        for (const auto& [file, layout_tag] : files) {
            w.add_text(file, store_.read_text(stage, sh, file));
            tables.push_back({{"file", file}, {"layout", layout_tag}, {"stage", stage}});
        }
        if (std::string(stage) == "mask-eval") {
            const auto m = ordered_json::parse(store_.manifest(stage, sh));
            std::ostringstream os;
            os << "condition,top1_accuracy\n";
            for (const auto& [cond, acc] : m["meta"]["baseline_accuracy"].items()) os << cond << "," << num(acc.get<double>()) << "\n";
            w.add_text("baseline_accuracy.csv", os.str());
            tables.push_back({{"file", "baseline_accuracy.csv"}, {"layout", "baseline accuracy per input augmentation"}});
        }
    }
    ordered_json meta{{"estimate", estimate_hash}, {"tables", tables}, {"skipped", skipped}};
    w.commit(config_json(cfg_), meta.dump());
    return done("report", false);
}

}  // namespace augsens
