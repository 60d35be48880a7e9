#include "fedecho/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace fedecho {
namespace pt = boost::property_tree;

std::string to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::FedEcho:
      return "fedecho";
    case AlgorithmKind::FedBuff:
      return "fedbuff";
    case AlgorithmKind::Adaptive:
      return "adaptive";
  }
  return "unknown";
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"run.seed", "1", "root seed for every random stream"},
      {"run.seeds", "", "comma-separated seeds; runs each and aggregates"},
      {"run.rounds", "200", "global rounds T"},
      {"run.eval_every", "10", "evaluation period in rounds"},
      {"run.output_dir", "out", "output directory (relative to FEDECHO_OUTPUT_ROOT if set)"},
      {"run.clients", "50", "number of clients N"},
      {"run.concurrency", "25", "concurrency M_c"},
      {"run.buffer", "5", "buffer size M"},
      {"run.export_dataset", "true", "write dataset.bin next to the metrics"},
      {"data.kind", "gaussian_mixture", "gaussian_mixture | two_spirals"},
      {"data.classes", "10", "mixture classes K"},
      {"data.dims", "20", "mixture input dimension d"},
      {"data.spread", "1.0", "mixture within-class standard deviation"},
      {"data.center_scale", "1.0", "standard deviation of class centers"},
      {"data.noise", "0.1", "spiral noise"},
      {"data.n_train", "5000", "training samples"},
      {"data.n_test", "1000", "test samples"},
      {"data.n_unlabeled", "2000", "unlabeled distillation pool size"},
      {"data.pool", "in_distribution", "in_distribution | shifted"},
      {"data.alpha_dir", "0.1", "Dirichlet concentration of the client split"},
      {"data.file", "", "load the dataset from this binary file instead of generating"},
      {"model.arch", "linear", "linear | mlp"},
      {"model.hidden", "32", "hidden width of the mlp"},
      {"local.lr", "0.05", "local learning rate eta_l"},
      {"local.epochs", "2", "local epochs per dispatch"},
      {"local.steps", "", "local SGD steps per dispatch (replaces epochs)"},
      {"local.batch", "50", "local mini-batch size"},
      {"local.weight_decay", "1e-4", "local L2 weight decay"},
      {"server.algorithm", "fedecho", "fedecho | fedbuff | adaptive"},
      {"server.lr", "1.0", "global learning rate eta"},
      {"server.beta1", "0.9", "adaptive server beta1"},
      {"server.beta2", "0.99", "adaptive server beta2"},
      {"server.epsilon", "1e-8", "adaptive server epsilon"},
      {"distill.alpha", "dynamic", "dynamic | fixed value in [0, 1]"},
      {"distill.alpha_min", "0.2", "alpha at zero teacher entropy"},
      {"distill.alpha_max", "0.8", "alpha at maximal teacher entropy"},
      {"distill.nu", "5", "gradient clip threshold (inf disables)"},
      {"distill.lr", "1e-3", "distillation learning rate eta_d"},
      {"distill.steps", "", "distillation steps Q per round (default: one pass)"},
      {"distill.batch", "50", "distillation mini-batch size"},
      {"distill.optimizer", "adam", "adam | sgd"},
      {"distill.beta1", "0.9", "distillation Adam beta1"},
      {"distill.beta2", "0.999", "distillation Adam beta2"},
      {"distill.epsilon", "1e-8", "distillation Adam epsilon"},
      {"delay.profile", "large", "large | mild (tier table), overridable per field"},
      {"delay.short_lo", "", "short tier lower bound (table units)"},
      {"delay.short_hi", "", "short tier upper bound"},
      {"delay.medium_lo", "", "medium tier lower bound"},
      {"delay.medium_hi", "", "medium tier upper bound"},
      {"delay.long_lo", "", "long tier lower bound"},
      {"delay.long_hi", "", "long tier upper bound"},
      {"delay.unit_seconds", "10", "seconds per table unit"},
      {"delay.gamma", "1.0", "softness of the sample-count to tier map (0 = deterministic)"},
      {"delay.max_long_fraction", "0.1", "cap on the share of long-tier clients"},
      {"delay.medium_fraction", "0.3", "share of the remaining clients in the medium tier"},
      {"delay.runtime_mode", "per_dispatch", "per_dispatch | per_client"},
  };
  return keys;
}

namespace {

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void check_known(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (!body.data().empty() && body.empty()) {
      throw ConfigError(section + ": keys must appear under a [section] header");
    }
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      if (!find_key(name)) throw ConfigError(name + ": unknown configuration key");
      (void)value;
    }
  }
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, std::string> e) : entries_(std::move(e)) {}

  bool has(const std::string& key) const { return !entries_.at(key).empty(); }
  const std::string& str(const std::string& key) const { return entries_.at(key); }

  double number(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "inf" || v == "+inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size() || std::isnan(x)) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
  }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
  }

  std::uint64_t unsigned_integer(const std::string& key, const std::string& text) const {
    try {
      std::size_t used = 0;
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      const unsigned long long x = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return x;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
  }

  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> options) const {
    const std::string& v = str(key);
    for (const char* o : options) {
      if (v == o) return v;
    }
    std::string list;
    for (const char* o : options) list += (list.empty() ? "" : " | ") + std::string(o);
    throw ConfigError(key + ": expected one of " + list + ", got '" + v + "'");
  }

 private:
  std::map<std::string, std::string> entries_;
};

int positive_int(const Reader& r, const std::string& key, long long min_value = 1) {
  const long long v = r.integer(key);
  if (v < min_value || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": must be an integer >= " + std::to_string(min_value));
  }
  return static_cast<int>(v);
}

}  // namespace

pt::ptree parse_config_text(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (auto& [section, body] : tree) {
    for (auto& [key, value] : body) value.put_value(trim(value.data()));
  }
  check_known(tree);
  return tree;
}

pt::ptree read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(pt::ptree& tree, const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError(key + ": unknown configuration key");
  tree.put(pt::ptree::path_type(key, '.'), trim(value));
}

Architecture RunConfig::architecture(int dims, int classes) const {
  if (model == ArchKind::Mlp) return Architecture::mlp(dims, hidden, classes);
  return Architecture::linear(dims, classes);
}

void RunConfig::validate() const {
  if (!dataset_file) dataset.validate();
  if (clients < 1) throw ConfigError("run.clients: need at least one client");
  if (buffer < 1) throw ConfigError("run.buffer: must be at least 1");
  if (!(buffer <= concurrency)) throw ConfigError("run.buffer: must not exceed run.concurrency");
  if (!(concurrency <= clients)) throw ConfigError("run.concurrency: must not exceed run.clients");
  if (rounds < 1) throw ConfigError("run.rounds: must be at least 1");
  if (eval_every < 1) throw ConfigError("run.eval_every: must be at least 1");
  if (!(alpha_dir > 0.0)) throw ConfigError("data.alpha_dir: must be positive");
  if (model == ArchKind::Mlp && hidden < 1) throw ConfigError("model.hidden: must be at least 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("server.lr: must be positive and finite");
  local.validate();
  distill.validate();
  if (algorithm == AlgorithmKind::Adaptive) adaptive.validate();
  delay.validate();
}

RunConfig build_config(const pt::ptree& tree) {
  check_known(tree);
  std::map<std::string, std::string> entries;
  for (const auto& k : config_keys()) {
    entries[k.name] = tree.get<std::string>(pt::ptree::path_type(k.name, '.'), k.default_value);
  }
  const Reader r(entries);
  RunConfig c;
  c.entries = entries;

  c.seed = r.unsigned_integer("run.seed", r.str("run.seed"));
  if (r.has("run.seeds")) {
    std::stringstream ss(r.str("run.seeds"));
    std::string item;
    while (std::getline(ss, item, ',')) c.seeds.push_back(r.unsigned_integer("run.seeds", trim(item)));
    if (c.seeds.empty()) throw ConfigError("run.seeds: empty list");
  }
  c.rounds = r.integer("run.rounds");
  c.eval_every = positive_int(r, "run.eval_every");
  c.output_dir = r.str("run.output_dir");
  c.clients = positive_int(r, "run.clients");
  c.concurrency = positive_int(r, "run.concurrency");
  c.buffer = positive_int(r, "run.buffer");
  c.export_dataset = r.boolean("run.export_dataset");

  if (r.choice("data.kind", {"gaussian_mixture", "two_spirals"}) == "gaussian_mixture") {
    GaussianMixture g;
    g.classes = positive_int(r, "data.classes", 2);
    g.dims = positive_int(r, "data.dims");
    g.spread = r.number("data.spread");
    g.center_scale = r.number("data.center_scale");
    c.dataset.kind = g;
  } else {
    c.dataset.kind = TwoSpirals{r.number("data.noise")};
  }
  c.dataset.n_train = positive_int(r, "data.n_train");
  c.dataset.n_test = positive_int(r, "data.n_test");
  c.dataset.n_unlabeled = positive_int(r, "data.n_unlabeled");
  c.dataset.pool = r.choice("data.pool", {"in_distribution", "shifted"}) == "shifted"
                       ? PoolMode::Shifted
                       : PoolMode::InDistribution;
  c.alpha_dir = r.number("data.alpha_dir");
  if (r.has("data.file")) c.dataset_file = r.str("data.file");

  c.model = r.choice("model.arch", {"linear", "mlp"}) == "mlp" ? ArchKind::Mlp : ArchKind::LinearSoftmax;
  c.hidden = positive_int(r, "model.hidden");

  c.local.eta_l = r.number("local.lr");
  if (r.has("local.steps")) {
    if (tree.get_optional<std::string>(pt::ptree::path_type("local.epochs", '.'))) {
      throw ConfigError("local.steps: cannot be combined with local.epochs");
    }
    c.local.work = LocalWork::Steps;
    c.local.amount = positive_int(r, "local.steps");
  } else {
    c.local.work = LocalWork::Epochs;
    c.local.amount = positive_int(r, "local.epochs");
  }
  c.local.batch = positive_int(r, "local.batch");
  c.local.weight_decay = r.number("local.weight_decay");

  const std::string algo = r.choice("server.algorithm", {"fedecho", "fedbuff", "adaptive"});
  c.algorithm = algo == "fedecho"   ? AlgorithmKind::FedEcho
                : algo == "fedbuff" ? AlgorithmKind::FedBuff
                                    : AlgorithmKind::Adaptive;
  c.eta = r.number("server.lr");
  c.adaptive.eta = c.eta;
  c.adaptive.beta1 = r.number("server.beta1");
  c.adaptive.beta2 = r.number("server.beta2");
  c.adaptive.epsilon = r.number("server.epsilon");

  if (r.str("distill.alpha") != "dynamic") c.distill.fixed_alpha = r.number("distill.alpha");
  c.distill.alpha_min = r.number("distill.alpha_min");
  c.distill.alpha_max = r.number("distill.alpha_max");
  c.distill.nu = r.number("distill.nu");
  c.distill.eta_d = r.number("distill.lr");
  if (r.has("distill.steps")) c.distill.steps = positive_int(r, "distill.steps");
  c.distill.batch_size = positive_int(r, "distill.batch");
  c.distill.optimizer =
      r.choice("distill.optimizer", {"adam", "sgd"}) == "adam" ? DistillOptimizer::Adam : DistillOptimizer::Sgd;
  c.distill.beta1 = r.number("distill.beta1");
  c.distill.beta2 = r.number("distill.beta2");
  c.distill.epsilon = r.number("distill.epsilon");

  c.delay_name = r.choice("delay.profile", {"large", "mild"});
  c.delay = c.delay_name == "large" ? DelayProfile::large() : DelayProfile::mild();
  auto tier_field = [&](const std::string& key, double& slot) {
    if (r.has(key)) slot = r.number(key);
  };
  tier_field("delay.short_lo", c.delay.short_tier.lo);
  tier_field("delay.short_hi", c.delay.short_tier.hi);
  tier_field("delay.medium_lo", c.delay.medium_tier.lo);
  tier_field("delay.medium_hi", c.delay.medium_tier.hi);
  tier_field("delay.long_lo", c.delay.long_tier.lo);
  tier_field("delay.long_hi", c.delay.long_tier.hi);
  c.delay.unit_seconds = r.number("delay.unit_seconds");
  c.delay.gamma = r.number("delay.gamma");
  c.delay.max_long_fraction = r.number("delay.max_long_fraction");
  c.delay.medium_fraction = r.number("delay.medium_fraction");
  c.runtime_mode = r.choice("delay.runtime_mode", {"per_dispatch", "per_client"}) == "per_client"
                       ? RuntimeMode::PerClient
                       : RuntimeMode::PerDispatch;

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return build_config(read_config_file(path)); }

}  // namespace fedecho
