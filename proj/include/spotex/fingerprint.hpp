#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spotex {

/// Milliseconds since the Unix epoch.
using Timestamp = std::int64_t;

inline constexpr int kMinRssiDbm = -120;
inline constexpr int kMaxRssiDbm = 0;
inline constexpr std::size_t kMaxSsidBytes = 32;
inline constexpr Timestamp kDefaultSessionTtlMs = 30'000;

class MalformedMac : public std::invalid_argument {
public:
    explicit MalformedMac(const std::string& raw)
        : std::invalid_argument("malformed MAC address: '" + raw + "'") {}
};

class InvalidObservation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Rewrites colon-, dash-, dot-grouped or bare hex MAC text into the
/// canonical "AA:BB:CC:DD:EE:FF" form.
std::string normalize_mac(std::string_view raw);

bool is_canonical_mac(std::string_view mac) noexcept;

enum class NetworkKind : std::uint8_t { Wifi = 0, Bluetooth = 1 };

std::string_view to_string(NetworkKind kind) noexcept;
std::optional<NetworkKind> parse_network_kind(std::string_view text) noexcept;

class NetworkId {
public:
    /// Throws InvalidObservation for SSIDs over 32 bytes or not valid UTF-8,
    /// MalformedMac for unparseable addresses.
    NetworkId(std::string ssid, std::string_view mac);

    const std::string& ssid() const noexcept { return ssid_; }
    const std::string& mac() const noexcept { return mac_; }

    friend bool operator==(const NetworkId&, const NetworkId&) = default;

private:
    std::string ssid_;
    std::string mac_;
};

class NetworkObservation {
public:
    NetworkObservation(NetworkId id, NetworkKind kind, int rssi_dbm, Timestamp observed_at);

    const NetworkId& id() const noexcept { return id_; }
    const std::string& ssid() const noexcept { return id_.ssid(); }
    const std::string& mac() const noexcept { return id_.mac(); }
    NetworkKind kind() const noexcept { return kind_; }
    int rssi() const noexcept { return rssi_; }
    Timestamp observed_at() const noexcept { return observed_at_; }

    friend bool operator==(const NetworkObservation&, const NetworkObservation&) = default;

private:
    NetworkId id_;
    NetworkKind kind_;
    int rssi_;
    Timestamp observed_at_;
};

/// Either an SSID or a canonical MAC. Matching ignores the observation kind.
class NetworkSelector {
public:
    enum class By : std::uint8_t { Ssid, Mac };

    static NetworkSelector ssid(std::string name);
    /// Normalizes the address; throws MalformedMac.
    static NetworkSelector mac(std::string_view address);

    By by() const noexcept { return by_; }
    const std::string& value() const noexcept { return value_; }

    /// Empty SSIDs (hidden networks) never match an SSID selector.
    bool matches(const NetworkObservation& obs) const noexcept;

    friend bool operator==(const NetworkSelector&, const NetworkSelector&) = default;
    friend auto operator<=>(const NetworkSelector&, const NetworkSelector&) = default;

private:
    NetworkSelector(By by, std::string value) : by_(by), value_(std::move(value)) {}

    By by_;
    std::string value_;
};

/// The set of currently visible nodes for one device, at most one observation
/// per (kind, mac). Iteration is ordered by (kind, mac).
class Fingerprint {
public:
    using Key = std::pair<NetworkKind, std::string>;
    using Storage = std::map<Key, NetworkObservation>;

    Fingerprint() = default;

    std::size_t size() const noexcept { return observations_.size(); }
    bool empty() const noexcept { return observations_.empty(); }
    auto begin() const noexcept { return observations_.begin(); }
    auto end() const noexcept { return observations_.end(); }

    const NetworkObservation* find(NetworkKind kind, const std::string& mac) const;
    std::vector<NetworkObservation> observations() const;

    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;

private:
    friend Fingerprint merge_observation(Fingerprint fp, const NetworkObservation& obs);
    friend Fingerprint prune_stale(const Fingerprint& fp, Timestamp now, Timestamp ttl_ms);

    Storage observations_;
};

/// Last-write-wins by timestamp; observations older than the stored one for
/// the same key are ignored.
Fingerprint merge_observation(Fingerprint fp, const NetworkObservation& obs);

/// Keeps observations with now - observed_at <= ttl_ms. Requires ttl_ms > 0.
Fingerprint prune_stale(const Fingerprint& fp, Timestamp now, Timestamp ttl_ms);

bool is_visible(const Fingerprint& fp, const NetworkSelector& sel);

/// Strongest RSSI among matching observations.
std::optional<int> observed_rssi(const Fingerprint& fp, const NetworkSelector& sel);

class FingerprintFormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Canonical wire form: a JSON array of
/// {"SSID","MAC","RSSI","kind","ts"} objects in (kind, MAC) order.
std::string to_canonical_json(const Fingerprint& fp);

/// Parses a JSON array of observations. "kind" defaults to wifi and "ts" to
/// default_ts when absent. MACs are normalized. Throws FingerprintFormatError
/// (or MalformedMac / InvalidObservation) on bad input.
Fingerprint fingerprint_from_json(std::string_view text, Timestamp default_ts);

/// Same as fingerprint_from_json but returns the observation list unmerged,
/// in document order.
std::vector<NetworkObservation> observations_from_json(std::string_view text, Timestamp default_ts);

}  // namespace spotex
