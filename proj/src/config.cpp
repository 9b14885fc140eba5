#include "ciftts/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ciftts {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

StreamFusion parse_fusion(const std::string& v) {
    if (v == "attention") return StreamFusion::kAttention;
    if (v == "concat") return StreamFusion::kConcat;
    throw std::invalid_argument("stream_fusion must be attention|concat, got '" + v + "'");
}

InjectionSite parse_injection(const std::string& v) {
    if (v == "encoder") return InjectionSite::kEncoder;
    if (v == "decoder") return InjectionSite::kDecoder;
    if (v == "both") return InjectionSite::kBoth;
    throw std::invalid_argument("injection_site must be encoder|decoder|both, got '" + v + "'");
}

TemporalPool parse_tpool(const std::string& v) {
    if (v == "attention") return TemporalPool::kAttention;
    if (v == "mean") return TemporalPool::kMean;
    throw std::invalid_argument("temporal_pool must be attention|mean, got '" + v + "'");
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument("expected boolean, got '" + v + "'");
}

}  // namespace

std::string to_string(StreamFusion f) {
    return f == StreamFusion::kAttention ? "attention" : "concat";
}

std::string to_string(InjectionSite s) {
    switch (s) {
        case InjectionSite::kEncoder: return "encoder";
        case InjectionSite::kDecoder: return "decoder";
        default: return "both";
    }
}

std::string to_string(TemporalPool p) {
    return p == TemporalPool::kAttention ? "attention" : "mean";
}

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "negation_enabled") c.negation_enabled = parse_bool(val);
        else if (key == "n_streams") c.n_streams = std::stoi(val);
        else if (key == "n_heads") c.n_heads = std::stoi(val);
        else if (key == "depth") c.depth = std::stoi(val);
        else if (key == "stream_fusion") c.stream_fusion = parse_fusion(val);
        else if (key == "injection_site") c.injection_site = parse_injection(val);
        else if (key == "temporal_pool") c.temporal_pool = parse_tpool(val);
        else if (key == "beta1") c.beta1 = std::stod(val);
        else if (key == "beta2") c.beta2 = std::stod(val);
        else if (key == "adam_eps") c.adam_eps = std::stod(val);
        else if (key == "lr_scale") c.lr_scale = std::stod(val);
        else if (key == "warmup_steps") c.warmup_steps = std::stoi(val);
        else if (key == "batch_size") c.batch_size = std::stoi(val);
        else if (key == "max_steps") c.max_steps = std::stoi(val);
        else if (key == "checkpoint_every") c.checkpoint_every = std::stoi(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "ref_crop_samples") c.ref_crop_samples = std::stoll(val);
        else if (key == "data_dir") c.data_dir = val;
        else if (key == "out_dir") c.out_dir = val;
        else throw std::invalid_argument("unknown config key '" + key + "' at line " +
                                         std::to_string(lineno));
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
}

std::string Config::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "negation_enabled=" << (negation_enabled ? "true" : "false") << "\n"
       << "n_streams=" << n_streams << "\n"
       << "n_heads=" << n_heads << "\n"
       << "depth=" << depth << "\n"
       << "stream_fusion=" << to_string(stream_fusion) << "\n"
       << "injection_site=" << to_string(injection_site) << "\n"
       << "temporal_pool=" << to_string(temporal_pool) << "\n"
       << "beta1=" << beta1 << "\n"
       << "beta2=" << beta2 << "\n"
       << "adam_eps=" << adam_eps << "\n"
       << "lr_scale=" << lr_scale << "\n"
       << "warmup_steps=" << warmup_steps << "\n"
       << "batch_size=" << batch_size << "\n"
       << "max_steps=" << max_steps << "\n"
       << "checkpoint_every=" << checkpoint_every << "\n"
       << "seed=" << seed << "\n"
       << "ref_crop_samples=" << ref_crop_samples << "\n"
       << "data_dir=" << data_dir << "\n"
       << "out_dir=" << out_dir << "\n";
    return os.str();
}

void Config::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config file: " + path);
    f << serialize();
}

void Config::validate() const {
    if (n_streams < 1) throw std::invalid_argument("n_streams must be >= 1");
    if (n_heads < 1 || 128 % n_heads != 0)
        throw std::invalid_argument("n_heads must divide the hidden width 128");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
    if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
        throw std::invalid_argument("Adam betas must lie in (0,1)");
    if (!(adam_eps > 0)) throw std::invalid_argument("adam_eps must be > 0");
    if (!(lr_scale > 0)) throw std::invalid_argument("lr_scale must be > 0");
    if (ref_crop_samples != 0 && ref_crop_samples < 320)
        throw std::invalid_argument("ref_crop_samples must be 0 or >= 320");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
}

uint64_t Config::hash() const {
    std::ostringstream os;
    os.precision(17);
    os << negation_enabled << '|' << n_streams << '|' << n_heads << '|' << depth << '|'
       << to_string(stream_fusion) << '|' << to_string(injection_site) << '|'
       << to_string(temporal_pool) << '|' << beta1 << '|' << beta2 << '|' << adam_eps << '|'
       << lr_scale << '|' << warmup_steps << '|' << batch_size << '|' << max_steps << '|'
       << seed << '|' << ref_crop_samples;
    const std::string s = os.str();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ciftts
