#include "sleepnet/budget.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sleepnet {

namespace {

constexpr double kEpochDeadlineSeconds = 30.0;

std::string trim_copy(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

DeviceProfile nano33ble_profile() { return {"nano33ble", 1'048'576, 262'144, 64'000'000}; }

std::vector<DeviceProfile> parse_profiles(std::string_view text) {
    std::vector<DeviceProfile> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::replace(line.begin(), line.end(), ',', ' ');
        line = trim_copy(line);
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        DeviceProfile p;
        long long flash = 0, sram = 0, clock = 0;
        std::string extra;
        if (!(ls >> p.name >> flash >> sram >> clock) || (ls >> extra)) {
            throw Error(ErrorCode::ProfileError, "profile line " + std::to_string(line_no) +
                                                     ": expected 'name flash sram clock'");
        }
        if (flash <= 0 || sram <= 0 || clock <= 0) {
            throw Error(ErrorCode::ProfileError, "profile '" + p.name + "': all sizes must be positive");
        }
        p.flash_bytes = static_cast<std::uint64_t>(flash);
        p.sram_bytes = static_cast<std::uint64_t>(sram);
        p.clock_hz = static_cast<std::uint64_t>(clock);
        out.push_back(std::move(p));
    }
    return out;
}

DeviceProfile find_profile(std::string_view name, const std::optional<std::filesystem::path>& profile_file) {
    if (name == "nano33ble") return nano33ble_profile();

    std::vector<std::filesystem::path> candidates;
    if (profile_file) candidates.push_back(*profile_file);
    if (const char* dir = std::getenv("SLEEPNET_PROFILE_DIR")) {
        candidates.push_back(std::filesystem::path(dir) / "profiles.txt");
    }
    for (const auto& path : candidates) {
        std::ifstream in(path);
        if (!in) continue;
        std::stringstream buf;
        buf << in.rdbuf();
        for (auto& p : parse_profiles(buf.str())) {
            if (p.name == name) return p;
        }
    }
    throw Error(ErrorCode::ProfileError, "unknown device profile '" + std::string(name) + "'");
}

std::vector<LayerCost> layer_costs(const ArchConfig& arch, std::size_t activation_bytes) {
    arch.validate();
    const std::uint64_t w = activation_bytes;
    std::vector<LayerCost> layers;

    const auto chain = arch.length_chain();
    std::uint64_t length = arch.input_length, channels = 1;
    for (std::size_t i = 0; i < arch.convs.size(); ++i) {
        const std::uint64_t lout = chain[i], cout = arch.conv_channels(i);
        LayerCost c;
        c.name = "conv" + std::to_string(i + 1);
        c.input_bytes = length * channels * w;
        c.output_bytes = lout * cout * w;
        c.macs = lout * arch.convs[i].kernel * channels * cout;
        layers.push_back(c);
        length = lout;
        channels = cout;
    }

    const std::uint64_t t = length, d = arch.model_width(), f = arch.ffn_width(), k = arch.n_classes;
    layers.push_back({"norm1", t * d * w, t * d * w, 0, 0});
    layers.push_back({"attention", t * d * w, t * d * w, t * d * w, 4 * t * d * d + 2 * t * t * d});
    layers.push_back({"norm2", t * d * w, t * d * w, 0, 0});
    layers.push_back({"ffn1", t * d * w, t * f * w, t * d * w, t * d * f});
    layers.push_back({"ffn2", t * f * w, t * d * w, t * d * w, t * f * d});
    layers.push_back({"classifier", t * d * w, k * w, 0, t * d * k});
    layers.push_back({"softmax", k * w, k * w, 0, 0});
    return layers;
}

std::uint64_t peak_ram(std::span<const LayerCost> layers) {
    std::uint64_t peak = 0;
    for (const auto& l : layers) peak = std::max(peak, l.live_bytes());
    return peak;
}

std::uint64_t peak_ram(const ArchConfig& arch, std::size_t activation_bytes) {
    return peak_ram(layer_costs(arch, activation_bytes));
}

std::uint64_t mac_count(const ArchConfig& arch) {
    std::uint64_t total = 0;
    for (const auto& l : layer_costs(arch, 4)) total += l.macs;
    return total;
}

std::uint64_t flash_usage(const std::filesystem::path& model_file) {
    (void)read_model_file(model_file);
    return std::filesystem::file_size(model_file);
}

BudgetReport check_fit(std::uint64_t flash_used, const ArchConfig& arch, const DeviceProfile& profile) {
    BudgetReport r;
    r.profile = profile.name;
    r.flash_used = flash_used;
    r.flash_available = profile.flash_bytes;
    // activations are 32-bit for both float and int8-weight models
    r.peak_ram = peak_ram(arch, sizeof(float));
    r.sram_available = profile.sram_bytes;
    r.macs = mac_count(arch);
    r.fits_flash = r.flash_used <= r.flash_available;
    r.fits_ram = r.peak_ram <= r.sram_available;
    r.flash_headroom = 1.0 - static_cast<double>(r.flash_used) / static_cast<double>(r.flash_available);
    r.ram_headroom = 1.0 - static_cast<double>(r.peak_ram) / static_cast<double>(r.sram_available);
    r.latency_bound_s = static_cast<double>(r.macs) / static_cast<double>(profile.clock_hz);
    r.meets_epoch_deadline = r.latency_bound_s < kEpochDeadlineSeconds;
    return r;
}

BudgetReport check_fit(const std::filesystem::path& model_file, const DeviceProfile& profile) {
    const ModelFile file = read_model_file(model_file);
    return check_fit(std::filesystem::file_size(model_file), file.arch, profile);
}

std::string render_budget_text(const BudgetReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "device profile: " << r.profile << '\n';
    os << "flash: " << r.flash_used << " / " << r.flash_available << " bytes (" << 100.0 * r.flash_headroom
       << "% headroom)\n";
    os << "ram:   " << r.peak_ram << " / " << r.sram_available << " bytes peak activations (" << 100.0 * r.ram_headroom
       << "% headroom; code, stack and runtime excluded)\n";
    os << std::setprecision(4);
    os << "compute: " << r.macs << " MACs, latency bound " << r.latency_bound_s << " s per 30 s epoch\n";
    os << "fits: flash " << (r.fits_flash ? "yes" : "no") << ", ram " << (r.fits_ram ? "yes" : "no")
       << ", real-time " << (r.meets_epoch_deadline ? "yes" : "no") << '\n';
    return os.str();
}

std::string render_budget_kv(const BudgetReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "profile=" << r.profile << '\n'
       << "flash_used=" << r.flash_used << '\n'
       << "flash_available=" << r.flash_available << '\n'
       << "peak_ram=" << r.peak_ram << '\n'
       << "sram_available=" << r.sram_available << '\n'
       << "macs=" << r.macs << '\n'
       << "fits_flash=" << (r.fits_flash ? 1 : 0) << '\n'
       << "fits_ram=" << (r.fits_ram ? 1 : 0) << '\n'
       << "flash_headroom=" << r.flash_headroom << '\n'
       << "ram_headroom=" << r.ram_headroom << '\n'
       << "latency_bound_s=" << r.latency_bound_s << '\n'
       << "meets_epoch_deadline=" << (r.meets_epoch_deadline ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace sleepnet
