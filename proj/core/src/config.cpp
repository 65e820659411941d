#include "cada/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cada/checkpoint.hpp"

namespace cada {

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 2 || lr <= 0.0f || weight_decay < 0.0f)
        throw ConfigError("train: epochs/batch_size/lr/weight_decay out of range");
    if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("train: alpha must lie in [0,1]");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (loss.tau <= 0.0f) throw ConfigError("loss: tau must be positive");
    if (eta < 0) throw ConfigError("eval: eta must be >= 0");
    group_count(model.max_len, loss.group_size, loss.group_stride);  // throws when invalid
}

namespace {

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_value(const std::string& s);

template <typename T, typename Fn>
T checked_parse(const std::string& s, const char* what, Fn fn) {
    try {
        size_t pos = 0;
        const T v = fn(s, &pos);
        if (pos != s.size()) throw ConfigError("config: bad " + std::string(what) + " '" + s + "'");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("config: bad " + std::string(what) + " '" + s + "'");
    }
}

template <>
int parse_value<int>(const std::string& s) {
    return checked_parse<int>(s, "integer", [](const std::string& x, size_t* p) {
        return std::stoi(x, p);
    });
}

template <>
float parse_value<float>(const std::string& s) {
    return checked_parse<float>(s, "float", [](const std::string& x, size_t* p) {
        return std::stof(x, p);
    });
}

template <>
uint64_t parse_value<uint64_t>(const std::string& s) {
    return checked_parse<uint64_t>(s, "unsigned", [](const std::string& x, size_t* p) {
        return std::stoull(x, p);
    });
}

template <>
bool parse_value<bool>(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: bad bool '" + s + "'");
}

std::string fmt_float(float v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

template <typename T, typename Member>
Field field(Member member) {
    return {[member](const RunConfig& c) {
                if constexpr (std::is_same_v<T, float>)
                    return fmt_float(c.*member);
                else if constexpr (std::is_same_v<T, bool>)
                    return std::string(c.*member ? "true" : "false");
                else
                    return std::to_string(c.*member);
            },
            [member](RunConfig& c, const std::string& s) { c.*member = parse_value<T>(s); }};
}

#define NESTED_FIELD(T, path)                                                              \
    Field{[](const RunConfig& c) {                                                         \
              if constexpr (std::is_same_v<T, float>)                                      \
                  return fmt_float(c.path);                                                \
              else if constexpr (std::is_same_v<T, bool>)                                  \
                  return std::string(c.path ? "true" : "false");                           \
              else                                                                         \
                  return std::to_string(c.path);                                           \
          },                                                                               \
          [](RunConfig& c, const std::string& s) { c.path = parse_value<T>(s); }}

const std::map<std::string, Field>& field_map() {
    static const std::map<std::string, Field> fields = {
        {"model.image_h", NESTED_FIELD(int, model.image_h)},
        {"model.image_w", NESTED_FIELD(int, model.image_w)},
        {"model.image_c", NESTED_FIELD(int, model.image_c)},
        {"model.patch", NESTED_FIELD(int, model.patch)},
        {"model.image_layers", NESTED_FIELD(int, model.image_layers)},
        {"model.d_v", NESTED_FIELD(int, model.d_v)},
        {"model.image_heads", NESTED_FIELD(int, model.image_heads)},
        {"model.text_layers", NESTED_FIELD(int, model.text_layers)},
        {"model.d_t", NESTED_FIELD(int, model.d_t)},
        {"model.text_heads", NESTED_FIELD(int, model.text_heads)},
        {"model.max_len", NESTED_FIELD(int, model.max_len)},
        {"model.vocab_size", NESTED_FIELD(int, model.vocab_size)},
        {"model.d_latent", NESTED_FIELD(int, model.d_latent)},
        {"model.ffn_mult", NESTED_FIELD(int, model.ffn_mult)},
        {"loss.tau", NESTED_FIELD(float, loss.tau)},
        {"loss.lambda", NESTED_FIELD(float, loss.lambda_ndf)},
        {"loss.group_size", NESTED_FIELD(int, loss.group_size)},
        {"loss.group_stride", NESTED_FIELD(int, loss.group_stride)},
        {"loss.use_ndf", NESTED_FIELD(bool, loss.use_ndf)},
        {"loss.use_atp", NESTED_FIELD(bool, loss.use_atp)},
        {"loss.use_ara", NESTED_FIELD(bool, loss.use_ara)},
        {"train.epochs", NESTED_FIELD(int, train.epochs)},
        {"train.batch_size", NESTED_FIELD(int, train.batch_size)},
        {"train.lr", NESTED_FIELD(float, train.lr)},
        {"train.weight_decay", NESTED_FIELD(float, train.weight_decay)},
        {"train.alpha", NESTED_FIELD(float, train.alpha)},
        {"train.seed", NESTED_FIELD(uint64_t, train.seed)},
        {"train.checkpoint_every", NESTED_FIELD(int, train.checkpoint_every)},
        {"eval.eta", NESTED_FIELD(int, eta)},
    };
    return fields;
}

}  // namespace

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [key, f] : field_map()) os << key << "=" << f.get(*this) << "\n";
    return os.str();
}

uint64_t RunConfig::hash() const { return fnv1a_str(to_text()); }

void apply_override(RunConfig& config, const std::string& key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + key_value + "' is not key=value");
    const std::string key = key_value.substr(0, eq);
    const std::string value = key_value.substr(eq + 1);
    const auto& fields = field_map();
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(config, value);
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    std::istringstream is(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        std::string entry = line.substr(b, e - b + 1);
        const auto eq = entry.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": missing '='");
        auto strip = [](std::string s) {
            const auto sb = s.find_first_not_of(" \t");
            const auto se = s.find_last_not_of(" \t");
            return sb == std::string::npos ? std::string() : s.substr(sb, se - sb + 1);
        };
        apply_override(config, strip(entry.substr(0, eq)) + "=" + strip(entry.substr(eq + 1)));
    }
    return config;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace cada
