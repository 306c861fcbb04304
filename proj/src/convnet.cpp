#include "augsens/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "augsens/augment.hpp"
#include "augsens/error.hpp"
#include "augsens/rng.hpp"

namespace augsens {

std::string layer_kind(const Layer& layer) {
    return std::visit(
        [](const auto& l) -> std::string {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d>) return "conv2d";
            else if constexpr (std::is_same_v<L, ReLU>) return "relu";
            else if constexpr (std::is_same_v<L, MaxPool>) return "maxpool";
            else if constexpr (std::is_same_v<L, AdaptiveAvgPool>) return "avgpool-adaptive";
            else if constexpr (std::is_same_v<L, Flatten>) return "flatten";
            else if constexpr (std::is_same_v<L, Dense>) return "dense";
            else return "residual-add";
        },
        layer);
}

// ---- Network ------------------------------------------------------------------------

void Network::checkpoint(const std::string& name) {
    if (layers_.empty()) throw DomainError("checkpoint '" + name + "' has no layer to tap");
    if (name == kInputCheckpoint) throw DomainError("'input' is reserved for the network input");
    if (has_checkpoint(name)) throw DomainError("duplicate checkpoint name '" + name + "'");
    const std::size_t layer = layers_.size() - 1;
    for (const auto& c : checkpoints_) {
        if (c.layer == layer) throw DomainError("layer already tapped by checkpoint '" + c.name + "'");
    }
    bool conv = true;
    for (std::size_t i = layer + 1; i-- > 0;) {
        if (std::holds_alternative<Conv2d>(layers_[i])) break;
        if (std::holds_alternative<Dense>(layers_[i])) {
            conv = false;
            break;
        }
    }
    checkpoints_.push_back({name, layer, conv});
}

const Checkpoint& Network::find_checkpoint(const std::string& name) const {
    for (const auto& c : checkpoints_) {
        if (c.name == name) return c;
    }
    throw DomainError("network has no checkpoint '" + name + "'");
}

bool Network::has_checkpoint(const std::string& name) const {
    return std::any_of(checkpoints_.begin(), checkpoints_.end(), [&](const Checkpoint& c) { return c.name == name; });
}

std::vector<std::string> Network::checkpoint_names() const {
    std::vector<std::string> out;
    for (const auto& c : checkpoints_) out.push_back(c.name);
    return out;
}

namespace {

std::size_t conv_out(std::size_t n, std::size_t k, std::size_t stride, std::size_t dilation, std::size_t pad) {
    const std::size_t extent = (dilation + 1) * (k - 1) + 1;
    if (n + 2 * pad < extent) throw ShapeError("input side " + std::to_string(n) + " is smaller than the kernel extent");
    return (n + 2 * pad - extent) / stride + 1;
}

Shape layer_output_shape(const Layer& layer, const Shape& in) {
    return std::visit(
        [&](const auto& l) -> Shape {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d>) {
                if (in.size() != 3 || in[0] != l.c_in) {
                    throw ShapeError(l.name + ": expected " + std::to_string(l.c_in) + " input channels, got " +
                                     shape_to_string(in));
                }
                return {l.c_out, conv_out(in[1], l.k_h, l.stride, l.dilation, l.padding),
                        conv_out(in[2], l.k_w, l.stride, l.dilation, l.padding)};
            } else if constexpr (std::is_same_v<L, MaxPool>) {
                if (in.size() != 3) throw ShapeError("maxpool needs a rank-3 input");
                return {in[0], conv_out(in[1], l.k, l.stride, 0, 0), conv_out(in[2], l.k, l.stride, 0, 0)};
            } else if constexpr (std::is_same_v<L, AdaptiveAvgPool>) {
                if (in.size() != 3) throw ShapeError("adaptive pooling needs a rank-3 input");
                return {in[0], l.out_h, l.out_w};
            } else if constexpr (std::is_same_v<L, Flatten>) {
                return {shape_numel(in)};
            } else if constexpr (std::is_same_v<L, Dense>) {
                if (shape_numel(in) != l.n_in) {
                    throw ShapeError(l.name + ": expected " + std::to_string(l.n_in) + " inputs, got " + shape_to_string(in));
                }
                return {l.n_out};
            } else {
                return in;
            }
        },
        layer);
}

}  // namespace

std::vector<Shape> Network::layer_shapes() const {
    std::vector<Shape> out;
    Shape s = input_shape_;
    for (const auto& l : layers_) {
        s = layer_output_shape(l, s);
        out.push_back(s);
    }
    return out;
}

Shape Network::checkpoint_shape(const std::string& name) const {
    if (name == kInputCheckpoint) return input_shape_;
    return layer_shapes().at(find_checkpoint(name).layer);
}

void Network::validate() const {
    if (layers_.empty()) throw DomainError("network has no layers");
    const auto shapes = layer_shapes();
    std::set<std::string> names;
    for (const auto& c : checkpoints_) {
        if (!names.insert(c.name).second) throw DomainError("duplicate checkpoint name '" + c.name + "'");
    }
    const auto* last = std::get_if<Dense>(&layers_.back());
    if (!last || last->n_out != class_count_) {
        throw DomainError("the final layer must be dense with " + std::to_string(class_count_) + " outputs");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (const auto* r = std::get_if<ResidualAdd>(&layers_[i])) {
            const auto& src = find_checkpoint(r->source);
            if (src.layer >= i) throw DomainError("residual source '" + r->source + "' does not precede its consumer");
            const Shape in = i == 0 ? input_shape_ : shapes[i - 1];
            if (shapes[src.layer] != in) throw ShapeError("residual source '" + r->source + "' has a mismatched shape");
        } else if (const auto* c = std::get_if<Conv2d>(&layers_[i])) {
            if (c->weight.shape() != Shape{c->c_out, c->c_in, c->k_h, c->k_w} || c->bias.shape() != Shape{c->c_out}) {
                throw ShapeError(c->name + ": weight tensors do not match the declared shape");
            }
            if (c->stride < 1) throw DomainError(c->name + ": stride must be >= 1");
        } else if (const auto* d = std::get_if<Dense>(&layers_[i])) {
            if (d->weight.shape() != Shape{d->n_out, d->n_in} || d->bias.shape() != Shape{d->n_out}) {
                throw ShapeError(d->name + ": weight tensors do not match the declared shape");
            }
        } else if (const auto* m = std::get_if<MaxPool>(&layers_[i])) {
            if (m->k < 1 || m->stride < 1) throw DomainError("maxpool needs k >= 1 and stride >= 1");
        }
    }
}

Conv2d& Network::conv(const std::string& name) {
    for (auto& l : layers_) {
        if (auto* c = std::get_if<Conv2d>(&l); c && c->name == name) return *c;
    }
    throw DomainError("network has no conv layer '" + name + "'");
}

Dense& Network::dense(const std::string& name) {
    for (auto& l : layers_) {
        if (auto* d = std::get_if<Dense>(&l); d && d->name == name) return *d;
    }
    throw DomainError("network has no dense layer '" + name + "'");
}

// ---- layer kernels ------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& x, const Conv2d& l) {
    const Shape out_shape = layer_output_shape(l, x.shape());
    const std::size_t H = x.dim(1), W = x.dim(2);
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    const std::size_t PH = H + 2 * l.padding, PW = W + 2 * l.padding;
    const auto pad = static_cast<std::ptrdiff_t>(l.padding);

    // padded input
    std::vector<double> padded(l.c_in * PH * PW, 0.0);
    for (std::size_t c = 0; c < l.c_in; ++c) {
        for (std::size_t py = 0; py < PH; ++py) {
            std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(py) - pad;
            for (std::size_t px = 0; px < PW; ++px) {
                std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(px) - pad;
                std::ptrdiff_t yy = sy, xx = sx;
                const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
                if (l.mode == Padding::Circular) {
                    yy = ((sy % h) + h) % h;
                    xx = ((sx % w) + w) % w;
                } else if (l.mode == Padding::Reflect) {
                    yy = reflect_index(sy, h);
                    xx = reflect_index(sx, w);
                } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                    continue;
                }
                padded[(c * PH + py) * PW + px] = x.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
        }
    }

    const std::size_t step = l.dilation + 1;
    std::vector<double> acc(OH * OW);
    Tensor out(out_shape);
    for (std::size_t o = 0; o < l.c_out; ++o) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(l.bias[o]));
        for (std::size_t c = 0; c < l.c_in; ++c) {
            for (std::size_t i = 0; i < l.k_h; ++i) {
                for (std::size_t j = 0; j < l.k_w; ++j) {
                    const double w = l.weight[((o * l.c_in + c) * l.k_h + i) * l.k_w + j];
                    if (w == 0.0) continue;
                    for (std::size_t y = 0; y < OH; ++y) {
                        const double* row = padded.data() + (c * PH + y * l.stride + i * step) * PW + j * step;
                        double* dst = acc.data() + y * OW;
                        for (std::size_t xo = 0; xo < OW; ++xo) dst[xo] += w * row[xo * l.stride];
                    }
                }
            }
        }
        for (std::size_t k = 0; k < OH * OW; ++k) out[o * OH * OW + k] = static_cast<float>(acc[k]);
    }
    return out;
}

Tensor dense_forward(const Tensor& x, const Dense& l) {
    if (x.size() != l.n_in) throw ShapeError(l.name + ": expected " + std::to_string(l.n_in) + " inputs, got " + std::to_string(x.size()));
    Tensor out({l.n_out});
    for (std::size_t o = 0; o < l.n_out; ++o) {
        double acc = l.bias[o];
        const float* w = l.weight.data().data() + o * l.n_in;
        for (std::size_t i = 0; i < l.n_in; ++i) acc += static_cast<double>(w[i]) * x[i];
        out[o] = static_cast<float>(acc);
    }
    return out;
}

Tensor maxpool_forward(const Tensor& x, const MaxPool& l) {
    const Shape s = layer_output_shape(l, x.shape());
    Tensor out(s);
    for (std::size_t c = 0; c < s[0]; ++c) {
        for (std::size_t y = 0; y < s[1]; ++y) {
            for (std::size_t xo = 0; xo < s[2]; ++xo) {
                float best = -std::numeric_limits<float>::infinity();
                for (std::size_t i = 0; i < l.k; ++i) {
                    for (std::size_t j = 0; j < l.k; ++j) best = std::max(best, x.at(c, y * l.stride + i, xo * l.stride + j));
                }
                out.at(c, y, xo) = best;
            }
        }
    }
    return out;
}

Tensor adaptive_avgpool_forward(const Tensor& x, const AdaptiveAvgPool& l) {
    const Shape s = layer_output_shape(l, x.shape());
    const std::size_t H = x.dim(1), W = x.dim(2);
    Tensor out(s);
    for (std::size_t c = 0; c < s[0]; ++c) {
        for (std::size_t oy = 0; oy < l.out_h; ++oy) {
            const std::size_t y0 = oy * H / l.out_h, y1 = ((oy + 1) * H + l.out_h - 1) / l.out_h;
            for (std::size_t ox = 0; ox < l.out_w; ++ox) {
                const std::size_t x0 = ox * W / l.out_w, x1 = ((ox + 1) * W + l.out_w - 1) / l.out_w;
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y) {
                    for (std::size_t xx = x0; xx < x1; ++xx) acc += x.at(c, y, xx);
                }
                out.at(c, oy, ox) = static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.storage()) v = v > 0.0f ? v : 0.0f;
    return out;
}

namespace {

Tensor apply_layer(const Layer& layer, const Tensor& x, const std::map<std::size_t, Tensor>& taps, const Network& net) {
    return std::visit(
        [&](const auto& l) -> Tensor {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d>) {
                return conv2d_forward(x, l);
            } else if constexpr (std::is_same_v<L, ReLU>) {
                return relu_forward(x);
            } else if constexpr (std::is_same_v<L, MaxPool>) {
                return maxpool_forward(x, l);
            } else if constexpr (std::is_same_v<L, AdaptiveAvgPool>) {
                return adaptive_avgpool_forward(x, l);
            } else if constexpr (std::is_same_v<L, Flatten>) {
                return x.reshaped({x.size()});
            } else if constexpr (std::is_same_v<L, Dense>) {
                return dense_forward(x, l);
            } else {
                const auto it = taps.find(net.find_checkpoint(l.source).layer);
                if (it == taps.end()) throw DanglingSkipError("residual source '" + l.source + "' is not available");
                if (it->second.shape() != x.shape()) throw ShapeError("residual add: shape mismatch with " + l.source);
                Tensor out = x;
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += it->second[i];
                return out;
            }
        },
        layer);
}

const Checkpoint* checkpoint_at(const Network& net, std::size_t layer) {
    for (const auto& c : net.checkpoints()) {
        if (c.layer == layer) return &c;
    }
    return nullptr;
}

// Runs layers [begin, end] starting from x; `taps` may be pre-seeded with the start activation.
Tensor run_layers(const Network& net, std::size_t begin, std::size_t end, Tensor x, std::map<std::size_t, Tensor>& taps,
                  const MaskSet* masks, std::vector<ActivationRecord>* records, std::size_t sample_id) {
    for (std::size_t i = begin; i <= end; ++i) {
        x = apply_layer(net.layers()[i], x, taps, net);
        if (const Checkpoint* c = checkpoint_at(net, i)) {
            if (masks) {
                if (const auto it = masks->find(c->name); it != masks->end()) {
                    if (it->second.shape() != x.shape()) {
                        throw ShapeError("mask for " + c->name + " has shape " + shape_to_string(it->second.shape()) +
                                         ", activation has " + shape_to_string(x.shape()));
                    }
                    for (std::size_t k = 0; k < x.size(); ++k) x[k] *= it->second[k];
                }
            }
            taps[i] = x;
            if (records) records->push_back({c->name, sample_id, x});
        }
    }
    return x;
}

}  // namespace

ForwardResult forward_with_checkpoints(const Network& net, const Tensor& input, const MaskSet* masks,
                                       std::size_t sample_id) {
    if (input.shape() != net.input_shape()) {
        throw ShapeError("network input must be " + shape_to_string(net.input_shape()) + ", got " +
                         shape_to_string(input.shape()));
    }
    if (masks) {
        for (const auto& [name, m] : *masks) net.find_checkpoint(name);
    }
    ForwardResult result;
    std::map<std::size_t, Tensor> taps;
    result.logits = run_layers(net, 0, net.layers().size() - 1, input, taps, masks, &result.records, sample_id);
    return result;
}

Tensor forward(const Network& net, const Tensor& input, const MaskSet* masks) {
    return forward_with_checkpoints(net, input, masks).logits;
}

Tensor run_segment(const Network& net, const std::string& from, const std::string& to, const Tensor& x) {
    const Shape expected = net.checkpoint_shape(from);
    if (x.shape() != expected) {
        throw ShapeError("segment " + from + " -> " + to + " expects " + shape_to_string(expected) + ", got " +
                         shape_to_string(x.shape()));
    }
    if (from == to) return x;
    const std::size_t end = net.find_checkpoint(to).layer;
    const bool from_input = from == kInputCheckpoint;
    const std::size_t from_layer = from_input ? 0 : net.find_checkpoint(from).layer;
    const std::size_t begin = from_input ? 0 : from_layer + 1;
    if (!from_input && end < begin) throw DomainError("segment end '" + to + "' precedes its start '" + from + "'");
    for (std::size_t i = begin; i <= end; ++i) {
        if (const auto* r = std::get_if<ResidualAdd>(&net.layers()[i])) {
            const std::size_t src = net.find_checkpoint(r->source).layer;
            if (from_input ? src >= i : (src < from_layer || src >= i)) {
                throw DanglingSkipError("segment " + from + " -> " + to + " needs residual source '" + r->source +
                                        "' which lies outside the segment");
            }
        }
    }
    std::map<std::size_t, Tensor> taps;
    if (!from_input) taps[from_layer] = x;
    return run_layers(net, begin, end, x, taps, nullptr, nullptr, 0);
}

std::vector<std::size_t> predict_topk(std::span<const float> logits, std::size_t k) {
    if (k > logits.size()) {
        throw DomainError("top-" + std::to_string(k) + " requested from " + std::to_string(logits.size()) + " logits");
    }
    std::vector<std::size_t> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    idx.resize(k);
    return idx;
}

// ---- TinyNet-A --------------------------------------------------------------------------------

namespace {

Conv2d he_conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::uint64_t seed, std::uint64_t stream) {
    Conv2d c{name, c_in, c_out, 3, 3, 1, 0, 1, Padding::Zeros, Tensor({c_out, c_in, 3, 3}), Tensor({c_out})};
    StreamEngine rng(seed, stream_id(0xc0ff, stream));
    const double scale = std::sqrt(2.0 / static_cast<double>(c_in * 9));
    for (float& w : c.weight.storage()) w = static_cast<float>(scale * rng.normal());
    return c;
}

}  // namespace

Network tinynet_a(std::size_t class_count, std::uint64_t seed, std::size_t height, std::size_t width) {
    Network net({3, height, width}, class_count);
    net.add(he_conv("conv1", 3, 8, seed, 1));
    net.add(ReLU{});
    net.checkpoint("c1");
    net.add(MaxPool{2, 2});
    net.add(he_conv("conv2", 8, 16, seed, 2));
    net.add(ReLU{});
    net.checkpoint("c2");
    net.add(he_conv("conv3", 16, 16, seed, 3));
    net.add(ResidualAdd{"c2"});
    net.add(ReLU{});
    net.checkpoint("c3");
    net.add(AdaptiveAvgPool{4, 4});
    net.checkpoint("pool");
    net.add(Flatten{});
    net.add(Dense{"fc", 256, class_count, Tensor({class_count, 256}), Tensor({class_count})});
    net.checkpoint("logits");
    net.validate();
    return net;
}

// ---- weights container --------------------------------------------------------------------------

aswt::Archive weights_archive(const Network& net) {
    aswt::Archive a;
    for (const auto& l : net.layers()) {
        if (const auto* c = std::get_if<Conv2d>(&l)) {
            a.add(c->name + ".weight", c->weight);
            a.add(c->name + ".bias", c->bias);
        } else if (const auto* d = std::get_if<Dense>(&l)) {
            a.add(d->name + ".weight", d->weight);
            a.add(d->name + ".bias", d->bias);
        }
    }
    return a;
}

void save_weights(const Network& net, const std::filesystem::path& path) { weights_archive(net).write(path); }

std::vector<std::string> load_weights(Network& net, const aswt::Archive& archive) {
    std::set<std::string> used;
    auto take = [&](const std::string& name, Tensor& dst) {
        if (!archive.contains(name)) throw FormatError("weights file lacks tensor '" + name + "'");
        Tensor t = archive.tensor(name);
        if (t.shape() != dst.shape()) {
            throw ShapeError("tensor '" + name + "' has shape " + shape_to_string(t.shape()) + ", expected " +
                             shape_to_string(dst.shape()));
        }
        dst = std::move(t);
        used.insert(name);
    };
    for (auto& l : net.layers()) {
        if (auto* c = std::get_if<Conv2d>(&l)) {
            take(c->name + ".weight", c->weight);
            take(c->name + ".bias", c->bias);
        } else if (auto* d = std::get_if<Dense>(&l)) {
            take(d->name + ".weight", d->weight);
            take(d->name + ".bias", d->bias);
        }
    }
    std::vector<std::string> warnings;
    for (const auto& n : archive.names()) {
        if (!used.contains(n)) warnings.push_back("ignoring unknown tensor '" + n + "'");
    }
    return warnings;
}

std::vector<std::string> load_weights(Network& net, const std::filesystem::path& path) {
    return load_weights(net, aswt::Archive::read(path));
}

}  // namespace augsens
