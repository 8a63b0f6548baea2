// spinloop: command-line front end for the SOT stochastic-neuron toolkit.
// Subcommands cover device characterization, sigmoid/anisotropy fitting,
// width-scaling regression, baseline MNIST training, spiking conversion,
// variation/energy sweeps, hardware-in-loop training, the bench server and
// result re-emission for plotting.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spinloop/backend.hpp"
#include "spinloop/bench.hpp"
#include "spinloop/charlab.hpp"
#include "spinloop/checkpoint.hpp"
#include "spinloop/crossbar.hpp"
#include "spinloop/device.hpp"
#include "spinloop/hiltrain.hpp"
#include "spinloop/mlp.hpp"
#include "spinloop/mnist.hpp"
#include "spinloop/numfmt.hpp"
#include "spinloop/spiking.hpp"
#include "spinloop/sweeps.hpp"

namespace {

using nlohmann::json;
using namespace spinloop;

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open JSON file: " + path);
    json j;
    in >> j;
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write error on: " + path);
}

/// Result JSON layout shared by all report-emitting subcommands: the resolved
/// run parameters under "config", wall-clock under "meta" (the one field
/// excluded from reproducibility comparisons), payload under "result".
void write_report(const std::string& path, json config, json result) {
    json doc{{"config", std::move(config)},
             {"meta", json{{"timestamp", iso_timestamp()}}},
             {"result", std::move(result)}};
    write_text_file(path, doc.dump(2) + "\n");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> values;
    const auto colon1 = text.find(':');
    if (colon1 != std::string::npos && text.find(':', colon1 + 1) != std::string::npos) {
        // linspace form lo:hi:n
        const auto colon2 = text.find(':', colon1 + 1);
        const double lo = parse_double(text.substr(0, colon1));
        const double hi = parse_double(text.substr(colon1 + 1, colon2 - colon1 - 1));
        const std::uint64_t n = parse_u64(text.substr(colon2 + 1));
        if (n < 2) throw std::runtime_error("range list needs at least 2 points");
        for (std::uint64_t k = 0; k < n; ++k)
            values.push_back(lo + (hi - lo) * double(k) / double(n - 1));
        return values;
    }
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(parse_double(tok));
    if (values.empty()) throw std::runtime_error("empty number list");
    return values;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::istringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(static_cast<int>(parse_double(tok)));
    if (values.empty()) throw std::runtime_error("empty integer list");
    return values;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
        throw std::runtime_error("endpoint must be host:port, got '" + text + "'");
    return {text.substr(0, colon), static_cast<std::uint16_t>(parse_u64(text.substr(colon + 1)))};
}

std::string existing_variant(const std::string& base) {
    for (const auto& candidate : {base, base + ".gz"}) {
        std::ifstream probe(candidate, std::ios::binary);
        if (probe) return candidate;
    }
    throw std::runtime_error("missing dataset file: " + base + "[.gz]");
}

mnist::MnistSet load_mnist_split(const std::string& dir, bool train) {
    const std::string stem = train ? "train" : "t10k";
    return mnist::load_mnist_idx(existing_variant(dir + "/" + stem + "-images-idx3-ubyte"),
                                 existing_variant(dir + "/" + stem + "-labels-idx1-ubyte"));
}

nettrain::Dataset to_dataset(const mnist::MnistSet& set) {
    nettrain::Dataset data;
    data.images.resize(static_cast<Eigen::Index>(set.count),
                       static_cast<Eigen::Index>(mnist::kImagePixels));
    data.labels = set.labels;
    for (std::size_t i = 0; i < set.count; ++i) {
        const auto img = set.image(i);
        for (std::size_t c = 0; c < mnist::kImagePixels; ++c)
            data.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                img[c] / 255.0;
    }
    return data;
}

device::DeviceParams resolve_device_params(const std::string& params_file, double width,
                                           double i_bias_override, double i_delta_override) {
    device::DeviceParams params;
    if (!params_file.empty()) {
        params = bench::BenchDeviceConfig::from_json(load_json_file(params_file)).params;
    } else {
        params = device::nominal_device(device::DeviceGeometry(width));
    }
    if (i_bias_override > 0.0) params.i_bias_a = i_bias_override;
    if (i_delta_override > 0.0) params.i_delta_a = i_delta_override;
    params.validate();
    return params;
}

/// "--config file.json" pre-pass: keys are flag names and become synthetic
/// flags placed right after the subcommand, so explicit command-line flags
/// take precedence (every option uses take-last resolution). The `# config`
/// line embedded in result files uses the same key set, so an extracted
/// config reproduces its run. "command" is informational and skipped.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            break;
        }
    }
    if (config_path.empty() || args.empty()) return args;

    const json cfg = load_json_file(config_path);
    if (!cfg.is_object()) throw std::runtime_error("config file must hold a JSON object");
    std::vector<std::string> synthetic;
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command" || key == "config") continue;
        synthetic.push_back("--" + key);
        if (value.is_string())
            synthetic.push_back(value.get<std::string>());
        else if (value.is_boolean())
            synthetic.push_back(value.get<bool>() ? "true" : "false");
        else if (value.is_array()) {
            std::string joined;
            for (const auto& v : value) {
                if (!joined.empty()) joined += ",";
                joined += v.is_string() ? v.get<std::string>() : v.dump();
            }
            synthetic.push_back(joined);
        } else
            synthetic.push_back(value.dump());
    }
    std::vector<std::string> merged;
    merged.push_back(args[0]);  // subcommand
    merged.insert(merged.end(), synthetic.begin(), synthetic.end());
    merged.insert(merged.end(), args.begin() + 1, args.end());
    return merged;
}

std::unique_ptr<DeviceBackend> make_backend(const std::string& endpoint,
                                            const device::DeviceParams& params,
                                            std::uint64_t seed) {
    if (endpoint.empty()) return std::make_unique<SimulatedBackend>(params, seed);
    auto [host, port] = parse_endpoint(endpoint);
    return std::make_unique<bench::RemoteBackend>(host, port);
}

// ---------------------------------------------------------------------------

int cmd_characterize(const std::string& currents_text, std::uint64_t iters, std::uint64_t seed,
                     double width, double i_bias, double i_delta, const std::string& params_file,
                     const std::string& endpoint, const std::string& out_path) {
    const std::vector<double> currents = parse_double_list(currents_text);
    device::DeviceParams params = resolve_device_params(params_file, width, i_bias, i_delta);

    auto backend = make_backend(endpoint, params, seed);
    backend->seed(seed);
    double dev_bias = params.i_bias_a, dev_delta = params.i_delta_a;
    if (auto* remote = dynamic_cast<bench::RemoteBackend*>(backend.get())) {
        std::tie(dev_bias, dev_delta) = remote->query_params();
    }

    const charlab::SwitchCurve curve = charlab::run_reset_set_protocol(*backend, currents, iters);

    // keys are reloadable flags; device identity travels as the drive pair
    json config{{"command", "characterize"}, {"currents", currents}, {"iters", iters},
                {"seed", seed},              {"i-bias", dev_bias},   {"i-delta", dev_delta}};
    json meta{{"bench_wall_clock_s", charlab::protocol_wall_clock_seconds(currents.size(), iters)}};

    std::ostringstream out;
    out << "# config " << config.dump() << "\n";
    out << "# meta " << meta.dump() << "\n";
    charlab::write_csv(curve, out);
    write_text_file(out_path, out.str());
    std::cout << "characterize: " << curve.points.size() << " currents x " << iters
              << " iterations -> " << out_path << "\n";
    return 0;
}

int cmd_fit(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open curve CSV: " + in_path);
    const charlab::SwitchCurve curve = charlab::read_switch_curve_csv(in);
    const charlab::SigmoidFit fit = charlab::fit_sigmoid(curve);
    const double window = charlab::programming_window(fit);

    write_report(out_path, json{{"command", "fit"}, {"in", in_path}},
                 json{{"i_bias_A", fit.i_bias_a},
                      {"i_delta_A", fit.i_delta_a},
                      {"neg_log_likelihood", fit.neg_log_likelihood},
                      {"converged", fit.converged},
                      {"programming_window_A", window}});
    std::cout << "fit: i_bias=" << dtos(fit.i_bias_a) << " A, i_delta=" << dtos(fit.i_delta_a)
              << " A, window=" << dtos(window) << " A, converged=" << (fit.converged ? "yes" : "no")
              << "\n";
    return 0;
}

int cmd_anisotropy(const std::string& in_path, double floor_fraction,
                   const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open field-sweep CSV: " + in_path);
    const charlab::FieldSweep sweep = charlab::read_field_sweep_csv(in);
    const charlab::AnisotropyFit fit = charlab::fit_anisotropy(sweep, floor_fraction);

    write_report(out_path,
                 json{{"command", "anisotropy"}, {"in", in_path}, {"floor", floor_fraction}},
                 json{{"h_an_A_per_m", fit.h_an_a_per_m}, {"r0_ohm", fit.r0_ohm}});
    std::cout << "anisotropy: H_an=" << dtos(fit.h_an_a_per_m) << " A/m, r0=" << dtos(fit.r0_ohm)
              << " ohm\n";
    return 0;
}

int cmd_scaling(const std::string& fits_text, const std::string& widths_text,
                const std::string& quantity, const std::string& out_path) {
    const std::vector<double> widths = parse_double_list(widths_text);
    std::vector<std::string> fit_paths;
    {
        std::istringstream ss(fits_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) fit_paths.push_back(tok);
    }
    if (fit_paths.size() != widths.size())
        throw std::runtime_error("scaling: need one fit JSON per width");

    std::vector<std::pair<double, double>> samples;
    for (std::size_t k = 0; k < fit_paths.size(); ++k) {
        const json doc = load_json_file(fit_paths[k]);
        const json& result = doc.contains("result") ? doc.at("result") : doc;
        double value;
        if (quantity == "i_bias")
            value = result.at("i_bias_A").get<double>();
        else if (quantity == "i_delta")
            value = result.at("i_delta_A").get<double>();
        else if (quantity == "window")
            value = result.at("programming_window_A").get<double>();
        else
            throw std::runtime_error("scaling: quantity must be i_bias, i_delta or window");
        samples.emplace_back(widths[k], value);
    }

    const charlab::LinearFit fit = charlab::scaling_regression(samples);
    write_report(out_path,
                 json{{"command", "scaling"},
                      {"fits", fit_paths},
                      {"widths", widths},
                      {"quantity", quantity}},
                 json{{"slope_A_per_um", fit.slope},
                      {"intercept_A", fit.intercept},
                      {"r_squared", fit.r_squared}});
    std::cout << "scaling(" << quantity << "): slope=" << dtos(fit.slope)
              << " A/um, intercept=" << dtos(fit.intercept) << " A, r2=" << dtos(fit.r_squared)
              << "\n";
    return 0;
}

int cmd_train_baseline(const std::string& mnist_dir, const std::string& arch_text, int epochs,
                       int batch, double lr, double momentum, double dropout, std::uint64_t seed,
                       const std::string& model_path, const std::string& report_path) {
    const nettrain::Dataset train = to_dataset(load_mnist_split(mnist_dir, true));
    const nettrain::Dataset test = to_dataset(load_mnist_split(mnist_dir, false));

    std::vector<int> arch;
    for (double v : parse_double_list(arch_text)) arch.push_back(static_cast<int>(v));

    nettrain::TrainConfig config;
    config.epochs = epochs;
    config.batch_size = batch;
    config.learning_rate = lr;
    config.momentum = momentum;
    config.dropout = dropout;
    config.seed = seed;

    const nettrain::TrainResult result = nettrain::train_baseline(train, test, arch, config);
    nettrain::save_checkpoint(result.mlp, model_path);

    if (!report_path.empty())
        write_report(report_path,
                     json{{"command", "train-baseline"},
                          {"mnist", mnist_dir},
                          {"arch", arch},
                          {"epochs", epochs},
                          {"batch", batch},
                          {"lr", lr},
                          {"momentum", momentum},
                          {"dropout", dropout},
                          {"seed", seed}},
                     json{{"test_accuracy", result.test_accuracy},
                          {"epoch_losses", result.epoch_losses},
                          {"model", model_path}});
    std::cout << "train-baseline: test accuracy " << result.test_accuracy * 100.0 << "% -> "
              << model_path << "\n";
    return 0;
}

int cmd_convert_infer(const std::string& mnist_dir, const std::string& model_path,
                      std::size_t t_steps, std::size_t subset, double width, std::uint64_t seed,
                      const std::string& report_path) {
    const nettrain::Mlp mlp = nettrain::load_checkpoint(model_path);
    nettrain::Dataset test = to_dataset(load_mnist_split(mnist_dir, false));
    if (subset > 0) test = nettrain::select_subset(test, subset, seed);

    const device::DeviceParams nominal = device::nominal_device(device::DeviceGeometry(width));
    nettrain::NeuronBank bank = nettrain::make_ideal_bank(mlp, nominal, derive_seed(seed, 1));
    std::mt19937_64 encode_rng(derive_seed(seed, 2));
    const double acc = nettrain::stochastic_accuracy(mlp, test, bank, t_steps, encode_rng);

    if (!report_path.empty())
        write_report(report_path,
                     json{{"command", "convert-infer"},
                          {"mnist", mnist_dir},
                          {"model", model_path},
                          {"t-steps", t_steps},
                          {"subset", subset},
                          {"width", width},
                          {"seed", seed}},
                     json{{"accuracy", acc}, {"images", test.size()}});
    std::cout << "convert-infer: accuracy " << acc * 100.0 << "% over " << test.size()
              << " images at T=" << t_steps << "\n";
    return 0;
}

int cmd_sweep_variation(const std::string& mnist_dir, const std::string& model_path,
                        const std::string& widths_text, const std::string& deltas_text, int trials,
                        std::size_t subset, std::size_t t_steps, std::uint64_t seed,
                        const std::string& out_path) {
    const nettrain::Mlp mlp = nettrain::load_checkpoint(model_path);
    nettrain::Dataset test = to_dataset(load_mnist_split(mnist_dir, false));
    if (subset > 0) test = nettrain::select_subset(test, subset, seed);

    const std::vector<double> widths = parse_double_list(widths_text);
    const std::vector<double> deltas = parse_double_list(deltas_text);
    const auto table =
        nettrain::variation_sweep(mlp, test, widths, deltas, trials, t_steps, seed);

    json config{{"command", "sweep-variation"}, {"mnist", mnist_dir}, {"model", model_path},
                {"widths", widths},             {"deltas", deltas},   {"trials", trials},
                {"subset", subset},             {"t-steps", t_steps}, {"seed", seed}};
    std::ostringstream out;
    out << "# config " << config.dump() << "\n";
    out << "width_um,delta,trial,accuracy\n";
    for (const auto& p : table)
        out << dtos(p.width_um) << ',' << dtos(p.delta) << ',' << p.trial << ','
            << dtos(p.accuracy) << "\n";
    write_text_file(out_path, out.str());
    std::cout << "sweep-variation: " << table.size() << " rows -> " << out_path << "\n";
    return 0;
}

int cmd_sweep_energy(const std::string& mnist_dir, const std::string& model_path,
                     const std::string& widths_text, double g0, std::size_t subset,
                     std::size_t t_steps, std::uint64_t seed, const std::string& out_path,
                     const std::string& report_path) {
    const nettrain::Mlp mlp = nettrain::load_checkpoint(model_path);
    nettrain::Dataset test = to_dataset(load_mnist_split(mnist_dir, false));
    if (subset > 0) test = nettrain::select_subset(test, subset, seed);

    const std::vector<double> widths = parse_double_list(widths_text);
    const auto points = nettrain::energy_sweep(mlp, test, widths, g0, t_steps, seed);

    json config{{"command", "sweep-energy"}, {"mnist", mnist_dir}, {"model", model_path},
                {"widths", widths},          {"g0", g0},           {"subset", subset},
                {"t-steps", t_steps},        {"seed", seed}};
    std::ostringstream out;
    out << "# config " << config.dump() << "\n";
    out << "width_um,energy_normalized\n";
    for (const auto& p : points) out << dtos(p.width_um) << ',' << dtos(p.energy_normalized) << "\n";
    write_text_file(out_path, out.str());

    if (!report_path.empty()) {
        json reports = json::array();
        for (const auto& p : points) {
            json r = p.report.to_json();
            r["width_um"] = p.width_um;
            r["energy_normalized"] = p.energy_normalized;
            r["accuracy"] = p.accuracy;
            r["neuron_pulses"] = p.neuron_pulses;  // write/reset events, not in the read-energy sum
            reports.push_back(std::move(r));
        }
        write_report(report_path, config, reports);
    }
    std::cout << "sweep-energy: " << points.size() << " widths -> " << out_path << "\n";
    return 0;
}

struct HilCommon {
    hiltrain::HilConfig config;
    double width = 0.5;
    double variation = 0.0;
    std::string endpoints_text;
    int multiplex = 0;
};

/// Builds the neuron set: drives assume the width-law nominal; actual devices
/// carry the per-device bias variation. With --endpoints the devices live in
/// bench servers; with --multiplex N one physical device serves all neurons.
std::vector<hiltrain::HilNeuron> build_hil_neurons(const HilCommon& common) {
    const std::size_t n_neurons = common.config.classes.size();
    const device::DeviceParams nominal =
        device::nominal_device(device::DeviceGeometry(common.width));

    std::vector<std::shared_ptr<DeviceBackend>> backends;
    if (!common.endpoints_text.empty()) {
        std::istringstream ss(common.endpoints_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            auto [host, port] = parse_endpoint(tok);
            backends.push_back(std::make_shared<bench::RemoteBackend>(host, port));
        }
    } else {
        std::mt19937_64 vary_rng(derive_seed(common.config.seed, 7));
        const std::size_t n_physical = common.multiplex > 0 ? 1 : n_neurons;
        for (std::size_t j = 0; j < n_physical; ++j) {
            const device::DeviceParams actual =
                hiltrain::with_bias_variation(nominal, common.variation, vary_rng);
            backends.push_back(std::make_shared<SimulatedBackend>(
                actual, derive_seed(common.config.seed, 100 + j)));
        }
    }

    // seed every physical device from the run seed, local or remote, so wire
    // and in-process runs replay identically
    for (std::size_t j = 0; j < backends.size(); ++j)
        backends[j]->seed(derive_seed(common.config.seed, 100 + j));

    if (common.multiplex > 0) {
        if (backends.size() != 1)
            throw std::runtime_error("hil: --multiplex expects exactly one physical device");
        if (static_cast<std::size_t>(common.multiplex) != n_neurons)
            throw std::runtime_error("hil: --multiplex must equal the number of classes");
        backends = hiltrain::time_multiplex_backend(backends[0], n_neurons);
    }
    if (backends.size() != n_neurons)
        throw std::runtime_error("hil: need one backend per class neuron");

    std::vector<hiltrain::HilNeuron> neurons;
    for (std::size_t j = 0; j < n_neurons; ++j)
        neurons.push_back(hiltrain::HilNeuron{nominal, backends[j]});
    return neurons;
}

int cmd_hil_train(const std::string& mnist_dir, const HilCommon& common,
                  const std::string& transcript_path, const std::string& model_path) {
    const mnist::MnistSet train_set = load_mnist_split(mnist_dir, true);
    const hiltrain::HilDataset data = hiltrain::select_hil_images(
        train_set, common.config.classes, common.config.train_per_class);

    hiltrain::HilNetwork net = hiltrain::make_hil_network(
        mnist::kImagePixels, build_hil_neurons(common), derive_seed(common.config.seed, 3));

    json config{{"command", "hil-train"},
                {"mnist", mnist_dir},
                {"classes", common.config.classes},
                {"per-class", common.config.train_per_class},
                {"epochs", common.config.epochs},
                {"lr", common.config.learning_rate},
                {"t-steps", common.config.t_steps},
                {"seed", common.config.seed},
                {"width", common.width},
                {"variation", common.variation},
                {"multiplex", common.multiplex}};

    std::ostringstream transcript;
    transcript << "# config " << config.dump() << "\n";
    const hiltrain::TrainOutcome outcome =
        hiltrain::hil_train(data, net, common.config, &transcript);
    if (!transcript_path.empty()) write_text_file(transcript_path, transcript.str());

    if (!model_path.empty()) {
        nettrain::Mlp as_mlp;
        as_mlp.weights.push_back(net.weights);
        as_mlp.biases.push_back(nettrain::Vector::Zero(net.weights.cols()));
        nettrain::save_checkpoint(as_mlp, model_path);
    }

    std::cout << "hil-train: epochs=" << common.config.epochs;
    if (!outcome.epoch_losses.empty())
        std::cout << ", first-epoch loss " << outcome.epoch_losses.front() << ", final loss "
                  << outcome.epoch_losses.back();
    std::cout << "\n";
    return 0;
}

int cmd_hil_infer(const std::string& mnist_dir, const HilCommon& common,
                  const std::string& model_path, int test_per_class, const std::string& mode_text,
                  const std::string& report_path) {
    const mnist::MnistSet test_set = load_mnist_split(mnist_dir, false);
    const hiltrain::HilDataset data =
        hiltrain::select_hil_images(test_set, common.config.classes, test_per_class);

    const nettrain::Mlp as_mlp = nettrain::load_checkpoint(model_path);
    hiltrain::HilNetwork net;
    net.weights = as_mlp.weights.front();
    net.neurons = build_hil_neurons(common);
    net.validate();

    const hiltrain::InferMode mode = mode_text == "counts" ? hiltrain::InferMode::DeviceCounts
                                                            : hiltrain::InferMode::NetworkInput;

    std::mt19937_64 encode_rng(derive_seed(common.config.seed, 11));
    json records = json::array();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto result = hiltrain::hil_infer(
            data.images.row(static_cast<Eigen::Index>(i)), net, common.config, encode_rng, mode);
        const int predicted = common.config.classes[static_cast<std::size_t>(result.class_slot)];
        if (result.class_slot == data.class_slots[i]) ++correct;
        records.push_back(json{{"image_id", data.image_ids[i]},
                               {"label", data.labels[i]},
                               {"predicted", predicted},
                               {"confidences", result.confidences}});
    }
    const double accuracy = data.size() ? double(correct) / double(data.size()) : 0.0;

    if (!report_path.empty())
        write_report(report_path,
                     json{{"command", "hil-infer"},
                          {"mnist", mnist_dir},
                          {"model", model_path},
                          {"classes", common.config.classes},
                          {"test-per-class", test_per_class},
                          {"t-steps", common.config.t_steps},
                          {"seed", common.config.seed},
                          {"mode", mode_text},
                          {"width", common.width},
                          {"variation", common.variation}},
                     json{{"accuracy", accuracy}, {"images", records}});
    std::cout << "hil-infer(" << mode_text << "): " << correct << "/" << data.size()
              << " correct\n";
    return 0;
}

int cmd_serve_bench(const std::string& params_file, std::uint16_t port, bool realtime) {
    const auto config = bench::BenchDeviceConfig::from_json(load_json_file(params_file));
    bench::BenchServer server(config, port, realtime);
    std::cout << "serve-bench: listening on 127.0.0.1:" << server.port() << "\n" << std::flush;
    server.run();
    return 0;
}

int cmd_plot_data(const std::string& in_path) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open result file: " + in_path);
    std::string first;
    while (std::getline(in, first)) {
        if (!first.empty() && first.front() != '#') break;
    }

    if (!first.empty() && first.front() == '{') {
        // JSON report: emit the most plottable series it contains.
        in.seekg(0);
        json doc;
        in >> doc;
        const json& result = doc.contains("result") ? doc.at("result") : doc;
        if (result.is_array()) {
            for (const auto& row : result)
                if (row.contains("width_um") && row.contains("energy_normalized"))
                    std::cout << row.at("width_um").get<double>() << ' '
                              << row.at("energy_normalized").get<double>() << "\n";
            return 0;
        }
        if (result.contains("epoch_losses")) {
            const auto& losses = result.at("epoch_losses");
            for (std::size_t i = 0; i < losses.size(); ++i)
                std::cout << i + 1 << ' ' << losses[i].get<double>() << "\n";
            return 0;
        }
        throw std::runtime_error("plot-data: no plottable series in " + in_path);
    }

    // CSV: x = first column, y = last column; the switch-curve header gets
    // the empirical probability as y.
    const bool switch_curve = first == charlab::kSwitchCurveHeader;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() < 2) continue;
        if (switch_curve) {
            const double switches = parse_double(fields[1]);
            const double trials = parse_double(fields[2]);
            std::cout << fields[0] << ' ' << dtos(switches / trials) << "\n";
        } else {
            std::cout << fields[0] << ' ' << fields.back() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spinloop: spin-orbit-torque stochastic neuron co-design toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config_path;  // consumed by the pre-pass; declared for --help
    app.add_option("--config", config_path, "JSON config file; explicit flags win")
        ->expected(1);

    // Shared option storage; each subcommand binds the subset it uses.
    std::string currents, out_path, in_path, params_file, endpoint, mnist_dir, model_path;
    std::string widths_text = "5.0,0.3", deltas_text = "0,0.1,0.25", arch_text = "784,400,10";
    std::string fits_text, quantity = "i_bias", report_path, transcript_path, mode_text = "input";
    std::string endpoints_text, classes_text = "0,2,4,6";
    std::uint64_t iters = 100, seed = 1;
    std::uint64_t port = 0;
    double width = 0.5, i_bias = 0.0, i_delta = 0.0, floor_fraction = 0.8, g0 = 50e-6;
    double lr_baseline = 2.0, momentum = 0.5, dropout = 0.5, lr_hil = 0.5, variation = 0.0;
    int epochs_baseline = 40, batch = 100, trials = 10, per_class = 4, test_per_class = 1;
    int epochs_hil = 10, multiplex = 0;
    std::size_t t_steps_convert = 50, t_steps_hil = 100, subset = 2000;
    bool realtime = false;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; explicit flags win");
    };
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "global seed")->envname("SPINLOOP_SEED");
        add_config(cmd);
    };

    auto* characterize = app.add_subcommand("characterize", "run the reset-set protocol");
    characterize->add_option("--currents", currents, "comma list or lo:hi:n")->required();
    characterize->add_option("--iters", iters, "cycles per current point");
    characterize->add_option("--width", width, "device width in um (nominal laws)");
    characterize->add_option("--i-bias", i_bias, "override bias current (A)");
    characterize->add_option("--i-delta", i_delta, "override dispersion scale (A)");
    characterize->add_option("--params", params_file, "device parameter JSON file");
    characterize->add_option("--endpoint", endpoint, "bench server host:port");
    characterize->add_option("--out", out_path, "output curve CSV")->required();
    add_seed(characterize);

    auto* fit = app.add_subcommand("fit", "sigmoid fit + programming window from a curve CSV");
    fit->add_option("--in", in_path, "curve CSV")->required();
    fit->add_option("--out", out_path, "fit JSON")->required();
    add_config(fit);

    auto* anisotropy = app.add_subcommand("anisotropy", "anisotropy-field fit from a field sweep");
    anisotropy->add_option("--in", in_path, "field-sweep CSV")->required();
    anisotropy->add_option("--floor", floor_fraction, "low-tilt validity floor R/R0");
    anisotropy->add_option("--out", out_path, "fit JSON")->required();
    add_config(anisotropy);

    auto* scaling = app.add_subcommand("scaling", "width-scaling regression across fits");
    scaling->add_option("--fits", fits_text, "comma list of fit JSON files")->required();
    scaling->add_option("--widths", widths_text, "comma list of widths (um)")->required();
    scaling->add_option("--quantity", quantity, "i_bias | i_delta | window");
    scaling->add_option("--out", out_path, "regression JSON")->required();
    add_config(scaling);

    auto* train = app.add_subcommand("train-baseline", "train the MNIST baseline MLP");
    train->add_option("--mnist", mnist_dir, "directory with the IDX files")->required();
    train->add_option("--arch", arch_text, "layer sizes");
    train->add_option("--epochs", epochs_baseline, "training epochs");
    train->add_option("--batch", batch, "mini-batch size");
    train->add_option("--lr", lr_baseline, "learning rate");
    train->add_option("--momentum", momentum, "momentum fraction");
    train->add_option("--dropout", dropout, "hidden-layer dropout fraction");
    train->add_option("--out", model_path, "checkpoint path")->required();
    train->add_option("--report", report_path, "accuracy report JSON");
    add_seed(train);

    auto* convert = app.add_subcommand("convert-infer", "rate-coded inference with device neurons");
    convert->add_option("--mnist", mnist_dir, "directory with the IDX files")->required();
    convert->add_option("--model", model_path, "baseline checkpoint")->required();
    convert->add_option("--t-steps", t_steps_convert, "spike-train length");
    convert->add_option("--subset", subset, "evaluation subset size (0 = full set)");
    convert->add_option("--width", width, "device width in um");
    convert->add_option("--report", report_path, "report JSON");
    add_seed(convert);

    auto* sweep_var = app.add_subcommand("sweep-variation", "accuracy vs device variation");
    sweep_var->add_option("--mnist", mnist_dir)->required();
    sweep_var->add_option("--model", model_path)->required();
    sweep_var->add_option("--widths", widths_text, "widths to compare (um)");
    sweep_var->add_option("--deltas", deltas_text, "variation fractions");
    sweep_var->add_option("--trials", trials, "seeded trials per point");
    sweep_var->add_option("--subset", subset, "evaluation subset size");
    sweep_var->add_option("--t-steps", t_steps_convert, "spike-train length");
    sweep_var->add_option("--out", out_path, "CSV output")->required();
    add_seed(sweep_var);

    auto* sweep_en = app.add_subcommand("sweep-energy", "synaptic read energy vs width");
    sweep_en->add_option("--mnist", mnist_dir)->required();
    sweep_en->add_option("--model", model_path)->required();
    sweep_en->add_option("--widths", widths_text, "widths to sweep (um)");
    sweep_en->add_option("--g0", g0, "conductance per unit weight (S)");
    sweep_en->add_option("--subset", subset, "evaluation subset size");
    sweep_en->add_option("--t-steps", t_steps_convert, "spike-train length");
    sweep_en->add_option("--out", out_path, "CSV output")->required();
    sweep_en->add_option("--report", report_path, "energy report JSON");
    add_seed(sweep_en);

    auto* hil_train = app.add_subcommand("hil-train", "hardware-in-loop training");
    hil_train->add_option("--mnist", mnist_dir)->required();
    hil_train->add_option("--classes", classes_text, "digit classes");
    hil_train->add_option("--per-class", per_class, "training images per class");
    hil_train->add_option("--epochs", epochs_hil, "epochs over the training images");
    hil_train->add_option("--lr", lr_hil, "learning rate");
    hil_train->add_option("--t-steps", t_steps_hil, "spike-train length");
    hil_train->add_option("--width", width, "device width in um");
    hil_train->add_option("--variation", variation, "per-device bias variation fraction");
    hil_train->add_option("--multiplex", multiplex, "serve all neurons from one device");
    hil_train->add_option("--endpoints", endpoints_text, "comma list of bench host:port");
    hil_train->add_option("--transcript", transcript_path, "JSON-lines training transcript");
    hil_train->add_option("--out", model_path, "final weights checkpoint");
    add_seed(hil_train);

    auto* hil_infer = app.add_subcommand("hil-infer", "inference with the HIL network");
    hil_infer->add_option("--mnist", mnist_dir)->required();
    hil_infer->add_option("--model", model_path, "HIL weights checkpoint")->required();
    hil_infer->add_option("--classes", classes_text, "digit classes");
    hil_infer->add_option("--test-per-class", test_per_class, "test images per class");
    hil_infer->add_option("--t-steps", t_steps_hil, "spike-train length");
    hil_infer->add_option("--width", width, "device width in um");
    hil_infer->add_option("--variation", variation, "per-device bias variation fraction");
    hil_infer->add_option("--multiplex", multiplex, "serve all neurons from one device");
    hil_infer->add_option("--endpoints", endpoints_text, "comma list of bench host:port");
    hil_infer->add_option("--mode", mode_text, "input (network z-bar) | counts (device)");
    hil_infer->add_option("--report", report_path, "inference report JSON");
    add_seed(hil_infer);

    auto* serve = app.add_subcommand("serve-bench", "run the instrument-emulation server");
    serve->add_option("--params", params_file, "device parameter JSON file")->required();
    serve->add_option("--port", port, "TCP port (0 = ephemeral, printed on start)");
    serve->add_flag("--realtime", realtime, "sleep with real pulse timing");
    add_config(serve);

    auto* plot = app.add_subcommand("plot-data", "re-emit a result file as x/y columns");
    plot->add_option("--in", in_path, "result CSV or JSON")->required();
    add_config(plot);

    try {
        const std::vector<std::string> args = expand_config(argc, argv);
        std::vector<const char*> argv2;
        argv2.push_back(argv[0]);
        for (const auto& a : args) argv2.push_back(a.c_str());
        app.parse(static_cast<int>(argv2.size()), argv2.data());

        if (*characterize)
            return cmd_characterize(currents, iters, seed, width, i_bias, i_delta, params_file,
                                    endpoint, out_path);
        if (*fit) return cmd_fit(in_path, out_path);
        if (*anisotropy) return cmd_anisotropy(in_path, floor_fraction, out_path);
        if (*scaling) return cmd_scaling(fits_text, widths_text, quantity, out_path);
        if (*train)
            return cmd_train_baseline(mnist_dir, arch_text, epochs_baseline, batch, lr_baseline,
                                      momentum, dropout, seed, model_path, report_path);
        if (*convert)
            return cmd_convert_infer(mnist_dir, model_path, t_steps_convert, subset, width, seed,
                                     report_path);
        if (*sweep_var)
            return cmd_sweep_variation(mnist_dir, model_path, widths_text, deltas_text, trials,
                                       subset, t_steps_convert, seed, out_path);
        if (*sweep_en)
            return cmd_sweep_energy(mnist_dir, model_path, widths_text, g0, subset,
                                    t_steps_convert, seed, out_path, report_path);
        if (*hil_train || *hil_infer) {
            HilCommon common;
            common.config.classes = parse_int_list(classes_text);
            common.config.train_per_class = per_class;
            common.config.epochs = epochs_hil;
            common.config.learning_rate = lr_hil;
            common.config.t_steps = t_steps_hil;
            common.config.seed = seed;
            common.width = width;
            common.variation = variation;
            common.endpoints_text = endpoints_text;
            common.multiplex = multiplex;
            if (*hil_train) return cmd_hil_train(mnist_dir, common, transcript_path, model_path);
            return cmd_hil_infer(mnist_dir, common, model_path, test_per_class, mode_text,
                                 report_path);
        }
        if (*serve)
            return cmd_serve_bench(params_file, static_cast<std::uint16_t>(port), realtime);
        if (*plot) return cmd_plot_data(in_path);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "spinloop: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
