#include "cellscan/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cellscan/error.hpp"

using nlohmann::json;

namespace cellscan {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_f32le(std::string& out, float v) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    put_u32le(out, bits);
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint64_t get_u64le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

[[noreturn]] void format_fail(std::size_t offset, const std::string& what) {
    throw FormatError("trainer",
                      "model file at byte " + std::to_string(offset) + ": " + what);
}

// Ordered (name, tensor) directory: parameters, running stats, Adam moments,
// step counter. The same walk is used by save and load so order always
// agrees with the header.
struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

std::vector<NamedTensor> tensor_directory(Model& model, AdamState& adam, Tensor& t_holder) {
    std::vector<NamedTensor> dir;
    auto add_layer_tensors = [&dir](std::size_t i, Layer& layer, bool params_pass) {
        std::string prefix = "layer" + std::to_string(i) + ".";
        std::vector<Tensor*> ts;
        if (params_pass)
            layer.collect_params(ts);
        else
            layer.collect_state(ts);
        const char* conv_names[2] = {"weights", "bias"};
        const char* bn_param_names[2] = {"gamma", "beta"};
        const char* bn_state_names[2] = {"running_mean", "running_var"};
        for (std::size_t k = 0; k < ts.size(); ++k) {
            std::string field;
            if (layer.kind() == "batchnorm")
                field = params_pass ? bn_param_names[k] : bn_state_names[k];
            else
                field = conv_names[k];
            dir.push_back({prefix + field, ts[k]});
        }
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        add_layer_tensors(i, *model.layers[i], true);
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        add_layer_tensors(i, *model.layers[i], false);
    for (std::size_t i = 0; i < adam.m.size(); ++i)
        dir.push_back({"adam.m" + std::to_string(i), &adam.m[i]});
    for (std::size_t i = 0; i < adam.v.size(); ++i)
        dir.push_back({"adam.v" + std::to_string(i), &adam.v[i]});
    dir.push_back({"adam.t", &t_holder});
    return dir;
}

json layer_description(const Layer& layer_const) {
    auto& layer = const_cast<Layer&>(layer_const);
    json j;
    j["kind"] = layer.kind();
    if (auto* conv = dynamic_cast<Conv2dLayer*>(&layer)) {
        j["in"] = conv->in_channels();
        j["out"] = conv->out_channels();
    } else if (auto* bn = dynamic_cast<BatchNormLayer*>(&layer)) {
        j["channels"] = bn->channels();
        j["epsilon"] = double(bn->epsilon());
        j["momentum"] = double(bn->momentum());
    } else if (auto* drop = dynamic_cast<DropoutLayer*>(&layer)) {
        j["rate"] = double(drop->rate());
    } else if (auto* dense = dynamic_cast<DenseLayer*>(&layer)) {
        j["in"] = dense->in_features();
        j["out"] = dense->out_features();
    } else if (auto* act = dynamic_cast<ActivationLayer*>(&layer)) {
        j["activation"] = to_string(act->activation());
    }
    return j;
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"input_channels", cfg.input_channels},
                {"input_size", cfg.input_size},
                {"conv_filters", cfg.conv_filters},
                {"hidden_widths", cfg.hidden_widths},
                {"conv_dropout", cfg.conv_dropout},
                {"hidden_dropout", cfg.hidden_dropout},
                {"hidden_activation", to_string(cfg.hidden_activation)},
                {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.input_channels = j.at("input_channels").get<std::size_t>();
    cfg.input_size = j.at("input_size").get<std::size_t>();
    cfg.conv_filters = j.at("conv_filters").get<std::vector<std::size_t>>();
    cfg.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    cfg.conv_dropout = j.at("conv_dropout").get<double>();
    cfg.hidden_dropout = j.at("hidden_dropout").get<double>();
    cfg.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

} // namespace

void save_model(const Model& model_const, const std::filesystem::path& path) {
    auto& model = const_cast<Model&>(model_const);
    Tensor t_holder = full({1}, real(model.adam.t));
    auto dir = tensor_directory(model, model.adam, t_holder);

    json header;
    header["config"] = config_to_json(model.config);
    json layer_list = json::array();
    for (const auto& layer : model.layers) layer_list.push_back(layer_description(*layer));
    header["layers"] = layer_list;
    header["adam"] = json{{"alpha", model.adam.alpha},
                          {"beta1", model.adam.beta1},
                          {"beta2", model.adam.beta2},
                          {"epsilon", model.adam.epsilon},
                          {"t", model.adam.t}};
    json tensor_list = json::array();
    for (const auto& nt : dir)
        tensor_list.push_back(json{{"name", nt.name}, {"shape", nt.tensor->shape()}});
    header["tensors"] = tensor_list;

    std::string header_text = header.dump();
    std::string out;
    out.append(kMagic, 4);
    put_u32le(out, kVersion);
    put_u64le(out, header_text.size());
    out += header_text;
    for (const auto& nt : dir)
        for (std::size_t i = 0; i < nt.tensor->size(); ++i)
            put_f32le(out, float((*nt.tensor)[i]));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("trainer", "cannot open " + path.string() + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f.good()) throw IoError("trainer", "write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("trainer", "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 16) format_fail(bytes.size(), "file too short for magic and header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) format_fail(0, "bad magic (expected MCNN)");
    std::uint32_t version = get_u32le(&bytes[4]);
    if (version != kVersion)
        format_fail(4, "unsupported version " + std::to_string(version));
    std::uint64_t header_len = get_u64le(&bytes[8]);
    if (16 + header_len > bytes.size()) format_fail(16, "truncated JSON header");

    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + std::ptrdiff_t(header_len));
    } catch (const json::exception& e) {
        format_fail(16, std::string("header is not valid JSON (") + e.what() + ")");
    }

    Model model;
    try {
        model = build_model(config_from_json(header.at("config")));
        model.adam.alpha = header.at("adam").at("alpha").get<double>();
        model.adam.beta1 = header.at("adam").at("beta1").get<double>();
        model.adam.beta2 = header.at("adam").at("beta2").get<double>();
        model.adam.epsilon = header.at("adam").at("epsilon").get<double>();
    } catch (const json::exception& e) {
        format_fail(16, std::string("header missing fields (") + e.what() + ")");
    }

    // The stored layer list must match what the config rebuilds; anything
    // else means the file was produced by a different code version.
    json expect = json::array();
    for (const auto& layer : model.layers) expect.push_back(layer_description(*layer));
    if (header.at("layers") != expect)
        format_fail(16, "layer list does not match the architecture config");

    Tensor t_holder = zeros({1});
    auto dir = tensor_directory(model, model.adam, t_holder);
    const json& tensor_list = header.at("tensors");
    if (tensor_list.size() != dir.size())
        format_fail(16, "tensor directory has " + std::to_string(tensor_list.size()) +
                            " entries, expected " + std::to_string(dir.size()));

    std::size_t pos = 16 + header_len;
    for (std::size_t i = 0; i < dir.size(); ++i) {
        const json& entry = tensor_list[i];
        if (entry.at("name") != dir[i].name)
            format_fail(pos, "tensor " + std::to_string(i) + " is named '" +
                                 entry.at("name").get<std::string>() + "', expected '" +
                                 dir[i].name + "'");
        auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != dir[i].tensor->shape())
            format_fail(pos, "tensor '" + dir[i].name + "' shape mismatch");
        std::size_t count = dir[i].tensor->size();
        if (pos + 4 * count > bytes.size())
            format_fail(pos, "truncated payload in tensor '" + dir[i].name + "'");
        for (std::size_t k = 0; k < count; ++k) {
            std::uint32_t bits = get_u32le(&bytes[pos + 4 * k]);
            (*dir[i].tensor)[k] = real(std::bit_cast<float>(bits));
        }
        pos += 4 * count;
    }
    if (pos != bytes.size())
        format_fail(pos, "trailing bytes after last tensor");

    model.adam.t = std::uint64_t(t_holder[0]);
    std::uint64_t t_json = header.at("adam").at("t").get<std::uint64_t>();
    if (t_json != model.adam.t)
        format_fail(16, "adam step counter disagrees between header and payload");
    return model;
}

} // namespace cellscan
