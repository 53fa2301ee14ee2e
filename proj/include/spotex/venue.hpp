#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spotex/fingerprint.hpp"

namespace spotex::sim {

inline constexpr int kMaxFloor = 63;

class VenueFormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DuplicateAp : public VenueFormatError {
public:
    using VenueFormatError::VenueFormatError;
};

class NonMonotonicPath : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DevicePoint {
    double x = 0.0;  // meters
    double y = 0.0;  // meters
    int floor = 0;

    friend bool operator==(const DevicePoint&, const DevicePoint&) = default;
};

struct AccessPointPlacement {
    NetworkId id;
    NetworkKind kind = NetworkKind::Wifi;
    DevicePoint position;
    int tx_ref_dbm = -40;  // received power at 1 m
};

/// Log-distance path loss with a fixed penalty per floor crossed.
struct PathLossParams {
    double exponent_n = 3.0;
    double floor_attenuation_db = 15.0;
    double floor_height_m = 4.0;
    int detection_threshold_dbm = -85;
    double noise_sigma_db = 0.0;
};

struct Venue {
    std::string name;
    std::vector<AccessPointPlacement> aps;
    PathLossParams params;
};

/// Parses and validates the venue JSON document. Throws VenueFormatError,
/// DuplicateAp (same MAC and kind twice) or MalformedMac.
Venue load_venue(std::string_view document);

/// Checks every range invariant; load_venue calls this.
void validate_venue(const Venue& venue);

std::string venue_to_json(const Venue& venue);

/// tx_ref - 10 n log10(max(d, 1)) - FAF |dfloor|, where d is the 3-D
/// distance with floors stacked floor_height_m apart.
double predict_rssi(const AccessPointPlacement& ap, const DevicePoint& p, const PathLossParams& params);

/// Synthetic scan at p. Noise per AP is drawn from a generator seeded by
/// (seed, venue name, AP MAC, now), so results do not depend on AP order.
Fingerprint scan(const Venue& venue, const DevicePoint& p, Timestamp now, std::uint64_t seed);

struct PathStep {
    DevicePoint point;
    Timestamp t;
};

/// Scans at each step; timestamps must strictly increase.
std::vector<Fingerprint> walk(const Venue& venue, const std::vector<PathStep>& path, std::uint64_t seed);

/// Parses a JSON array of {"x","y","floor","t"}.
std::vector<PathStep> load_path(std::string_view document);

}  // namespace spotex::sim
