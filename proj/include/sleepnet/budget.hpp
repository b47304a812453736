#pragma once

// Static flash / activation-RAM / compute analysis of a model against a
// microcontroller profile. RAM figures cover activations only; code, stack
// and runtime overhead are toolchain-specific and excluded.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sleepnet/net.hpp"

namespace sleepnet {

struct DeviceProfile {
    std::string name;
    std::uint64_t flash_bytes = 0;
    std::uint64_t sram_bytes = 0;
    std::uint64_t clock_hz = 0;
};

/// nRF52840 board: 1 MiB flash, 256 KiB SRAM, 64 MHz.
DeviceProfile nano33ble_profile();

/// One profile per line: "name flash sram clock" (whitespace or commas).
std::vector<DeviceProfile> parse_profiles(std::string_view text);

/// Built-in profiles first, then `profile_file` if given, then
/// $SLEEPNET_PROFILE_DIR/profiles.txt.
DeviceProfile find_profile(std::string_view name, const std::optional<std::filesystem::path>& profile_file = {});

struct LayerCost {
    std::string name;
    std::uint64_t input_bytes = 0;
    std::uint64_t output_bytes = 0;
    std::uint64_t residual_bytes = 0;  // saved skip-connection input live across the layer
    std::uint64_t macs = 0;

    std::uint64_t live_bytes() const { return input_bytes + output_bytes + residual_bytes; }
};

/// Layer-by-layer activation liveness and MACs for sequential execution.
std::vector<LayerCost> layer_costs(const ArchConfig& arch, std::size_t activation_bytes);

std::uint64_t peak_ram(std::span<const LayerCost> layers);
std::uint64_t peak_ram(const ArchConfig& arch, std::size_t activation_bytes);
std::uint64_t mac_count(const ArchConfig& arch);

/// Exact byte length of a valid model file.
std::uint64_t flash_usage(const std::filesystem::path& model_file);

struct BudgetReport {
    std::string profile;
    std::uint64_t flash_used = 0;
    std::uint64_t flash_available = 0;
    std::uint64_t peak_ram = 0;
    std::uint64_t sram_available = 0;
    std::uint64_t macs = 0;
    bool fits_flash = false;
    bool fits_ram = false;
    double flash_headroom = 0.0;  // 1 - used/available; negative when over budget
    double ram_headroom = 0.0;
    double latency_bound_s = 0.0;  // macs / clock, one MAC per cycle
    bool meets_epoch_deadline = false;
};

BudgetReport check_fit(std::uint64_t flash_used, const ArchConfig& arch, const DeviceProfile& profile);
BudgetReport check_fit(const std::filesystem::path& model_file, const DeviceProfile& profile);

std::string render_budget_text(const BudgetReport& report);
std::string render_budget_kv(const BudgetReport& report);

}  // namespace sleepnet
