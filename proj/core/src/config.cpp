#include "partco/config.hpp"

#include <fstream>
#include <sstream>

#include "partco/errors.hpp"

namespace partco {

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: bad numeric value '" + value + "' for key " + key);
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: bad integer value '" + value + "' for key " + key);
    }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "epochs") train.epochs = parse_uint(key, value);
    else if (key == "batch") train.batch_size = parse_uint(key, value);
    else if (key == "lr0") train.lr0 = parse_double(key, value);
    else if (key == "lr_min") train.lr_min = parse_double(key, value);
    else if (key == "momentum") train.momentum = parse_double(key, value);
    else if (key == "lambda_b") train.lambda_b = parse_double(key, value);
    else if (key == "tau_r") train.tau_r = parse_double(key, value);
    else if (key == "tau_s") train.tau_s = parse_double(key, value);
    else if (key == "tau_t") train.tau_t = parse_double(key, value);
    else if (key == "xi") train.xi = parse_double(key, value);
    else if (key == "rep_dim") train.rep_dim = parse_uint(key, value);
    else if (key == "part_dim") train.part_dim = parse_uint(key, value);
    else if (key == "aug_strength") train.aug_strength = parse_double(key, value);
    else if (key == "confidence_threshold") train.confidence_threshold = parse_double(key, value);
    else if (key == "eval_every") train.eval_every = parse_uint(key, value);
    else if (key == "num_classes") train.num_classes = parse_uint(key, value);
    else if (key == "mode") {
        if (value == "parametric") train.mode = TrainMode::Parametric;
        else if (value == "nonparametric") train.mode = TrainMode::NonParametric;
        else throw ValidationError("config: mode must be parametric|nonparametric, got " + value);
    } else if (key == "order") {
        if (value != "1" && value != "2" && value != "both" && value != "off")
            throw ValidationError("config: order must be 1|2|both|off, got " + value);
        order = value;
    } else if (key == "tau_obj") tau_obj = parse_double(key, value);
    else if (key == "per_class") per_class = parse_uint(key, value);
    else if (key == "seed") seed = parse_uint(key, value);
    else if (key == "features") features_path = value;
    else if (key == "manifest") manifest_path = value;
    else if (key == "labels") labels_path = value;
    else if (key == "out") out_path = value;
    else throw ValidationError("config: unknown key '" + key + "'");
}

PartLossOrder RunConfig::part_order() const {
    if (order == "off") return PartLossOrder::Off;
    if (order == "1") return PartLossOrder::First;
    if (order == "2") return PartLossOrder::Second;
    return PartLossOrder::Both;
}

LabelOrder RunConfig::label_order() const {
    if (order == "1") return LabelOrder::First;
    if (order == "2") return LabelOrder::Second;
    return LabelOrder::Both;
}

void apply_config_text(RunConfig& config, const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        const auto eq = line.find('=', start);
        if (eq == std::string::npos)
            throw ValidationError("config: missing '=' at line " + std::to_string(lineno));
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        const auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        config.set(key, value);
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_run_config: cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    RunConfig config = RunConfig::defaults();
    apply_config_text(config, ss.str());
    return config;
}

}  // namespace partco
