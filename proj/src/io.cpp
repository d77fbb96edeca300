#include "specmargin/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "specmargin/errors.hpp"

namespace specmargin::io {

using nlohmann::json;

namespace {

std::string line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json parse_json(std::string_view text, std::string_view what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        // nlohmann reports the byte just past the offending token
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw InvalidInput(std::string(what) + ": malformed JSON at " + line_col(text, at) + ": " + e.what());
    }
}

[[noreturn]] void field_error(const std::string& path, const std::string& problem) {
    throw InvalidInput("field '" + path + "': " + problem);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) field_error(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) field_error(path.empty() ? key : path + "." + key, "missing");
    return *it;
}

std::size_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) field_error(path, "expected a positive integer");
    const auto n = v.get<long long>();
    if (n <= 0) field_error(path, "expected a positive integer, got " + std::to_string(n));
    return static_cast<std::size_t>(n);
}

double as_finite(const json& v, const std::string& path) {
    if (!v.is_number()) field_error(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) field_error(path, "not finite");
    return x;
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (known) continue;
        if (key == "bias" || key == "biases" || key == "b") {
            field_error(path + "." + key, "bias terms are not supported (networks are bias-free)");
        }
        field_error(path + "." + key, "unknown field");
    }
}

}  // namespace

ReluNetwork parse_weights(std::string_view text) {
    const json doc = parse_json(text, "weight file");
    if (!doc.is_object()) field_error("$", "expected a JSON object");
    reject_unknown_keys(doc, {"format_version", "layers"}, "$");
    const json& version = require(doc, "format_version", "");
    if (!version.is_number_integer() || version.get<int>() != kWeightFormatVersion) {
        field_error("format_version", "unsupported version " + version.dump() + ", expected " +
                                          std::to_string(kWeightFormatVersion));
    }
    const json& layers = require(doc, "layers", "");
    if (!layers.is_array() || layers.empty()) field_error("layers", "expected a non-empty array");

    std::vector<Matrix> mats;
    mats.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = "layers[" + std::to_string(i) + "]";
        const json& layer = layers[i];
        if (!layer.is_object()) field_error(path, "expected an object");
        reject_unknown_keys(layer, {"rows", "cols", "data"}, path);
        const std::size_t rows = as_count(require(layer, "rows", path), path + ".rows");
        const std::size_t cols = as_count(require(layer, "cols", path), path + ".cols");
        const json& data = require(layer, "data", path);
        if (!data.is_array()) field_error(path + ".data", "expected an array");
        if (data.size() != rows * cols) {
            field_error(path + ".data", "expected " + std::to_string(rows * cols) + " numbers (rows*cols), got " +
                                            std::to_string(data.size()));
        }
        std::vector<double> entries(data.size());
        for (std::size_t j = 0; j < data.size(); ++j) {
            entries[j] = as_finite(data[j], path + ".data[" + std::to_string(j) + "]");
        }
        mats.emplace_back(rows, cols, std::move(entries));
        if (i > 0 && mats[i].cols() != mats[i - 1].rows()) {
            field_error(path + ".cols", "is " + std::to_string(cols) + " but the previous layer has " +
                                            std::to_string(mats[i - 1].rows()) + " rows");
        }
    }
    return ReluNetwork(std::move(mats));
}

LabeledDataset parse_dataset(std::string_view text) {
    const json doc = parse_json(text, "dataset file");
    if (!doc.is_object()) field_error("$", "expected a JSON object");
    reject_unknown_keys(doc, {"inputs", "labels", "num_classes"}, "$");
    const json& inputs = require(doc, "inputs", "");
    const json& labels = require(doc, "labels", "");
    const json& k = require(doc, "num_classes", "");
    if (!inputs.is_array() || inputs.empty()) field_error("inputs", "expected a non-empty array");
    if (!labels.is_array()) field_error("labels", "expected an array");
    if (labels.size() != inputs.size()) {
        field_error("labels", "has " + std::to_string(labels.size()) + " entries but inputs has " +
                                  std::to_string(inputs.size()));
    }
    const auto num_classes = static_cast<int>(as_count(k, "num_classes"));

    std::vector<Vector> xs;
    xs.reserve(inputs.size());
    std::vector<int> ys;
    ys.reserve(labels.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string path = "inputs[" + std::to_string(i) + "]";
        const json& row = inputs[i];
        if (!row.is_array() || row.empty()) field_error(path, "expected a non-empty array of numbers");
        if (i == 0) n = row.size();
        if (row.size() != n) {
            field_error(path, "has length " + std::to_string(row.size()) + ", expected " + std::to_string(n));
        }
        Vector x(row.size());
        for (std::size_t j = 0; j < row.size(); ++j) x[j] = as_finite(row[j], path + "[" + std::to_string(j) + "]");
        xs.push_back(std::move(x));

        const std::string lpath = "labels[" + std::to_string(i) + "]";
        const json& y = labels[i];
        if (!y.is_number_integer()) field_error(lpath, "expected an integer");
        const auto label = y.get<long long>();
        if (label < 0 || label >= num_classes) {
            field_error(lpath, std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
        }
        ys.push_back(static_cast<int>(label));
    }
    return LabeledDataset(std::move(xs), std::move(ys), num_classes);
}

std::string serialize_weights(const ReluNetwork& net) {
    json layers = json::array();
    for (const auto& w : net.layers()) {
        layers.push_back({{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"data", std::vector<double>(w.entries().begin(), w.entries().end())}});
    }
    const json doc = {{"format_version", kWeightFormatVersion}, {"layers", std::move(layers)}};
    return doc.dump(2) + "\n";
}

std::string serialize_dataset(const LabeledDataset& data) {
    json inputs = json::array();
    for (const auto& x : data.inputs()) inputs.push_back(x);
    const json doc = {{"inputs", std::move(inputs)},
                      {"labels", std::vector<int>(data.labels().begin(), data.labels().end())},
                      {"num_classes", data.num_classes()}};
    return doc.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw InvalidInput("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

ReluNetwork load_weights(const std::filesystem::path& path) {
    try {
        return parse_weights(read_file(path));
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    try {
        return parse_dataset(read_file(path));
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

void save_weights(const std::filesystem::path& path, const ReluNetwork& net) {
    write_file(path, serialize_weights(net));
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data) {
    write_file(path, serialize_dataset(data));
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return ss.str();
}

}  // namespace specmargin::io
