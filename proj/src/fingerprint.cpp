#include "spotex/fingerprint.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

namespace spotex {

namespace {

bool is_hex(char c) noexcept {
    return std::isxdigit(static_cast<unsigned char>(c)) != 0;
}

bool is_valid_utf8(const std::string& text) {
    try {
        (void)nlohmann::json(text).dump();
        return true;
    } catch (const nlohmann::json::type_error&) {
        return false;
    }
}

}  // namespace

std::string normalize_mac(std::string_view raw) {
    std::string digits;
    digits.reserve(12);
    for (char c : raw) {
        if (c == ':' || c == '-' || c == '.') continue;
        if (!is_hex(c)) throw MalformedMac(std::string(raw));
        digits.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (digits.size() != 12) throw MalformedMac(std::string(raw));

    std::string out;
    out.reserve(17);
    for (std::size_t i = 0; i < 12; i += 2) {
        if (i != 0) out.push_back(':');
        out.append(digits, i, 2);
    }
    return out;
}

bool is_canonical_mac(std::string_view mac) noexcept {
    if (mac.size() != 17) return false;
    for (std::size_t i = 0; i < mac.size(); ++i) {
        const char c = mac[i];
        if (i % 3 == 2) {
            if (c != ':') return false;
        } else if (!is_hex(c) || std::islower(static_cast<unsigned char>(c))) {
            return false;
        }
    }
    return true;
}

std::string_view to_string(NetworkKind kind) noexcept {
    return kind == NetworkKind::Bluetooth ? "bluetooth" : "wifi";
}

std::optional<NetworkKind> parse_network_kind(std::string_view text) noexcept {
    if (text == "wifi") return NetworkKind::Wifi;
    if (text == "bluetooth") return NetworkKind::Bluetooth;
    return std::nullopt;
}

NetworkId::NetworkId(std::string ssid, std::string_view mac)
    : ssid_(std::move(ssid)), mac_(normalize_mac(mac)) {
    if (ssid_.size() > kMaxSsidBytes)
        throw InvalidObservation("SSID longer than 32 bytes");
    if (!is_valid_utf8(ssid_))
        throw InvalidObservation("SSID is not valid UTF-8");
}

NetworkObservation::NetworkObservation(NetworkId id, NetworkKind kind, int rssi_dbm,
                                       Timestamp observed_at)
    : id_(std::move(id)), kind_(kind), rssi_(rssi_dbm), observed_at_(observed_at) {
    if (rssi_dbm < kMinRssiDbm || rssi_dbm > kMaxRssiDbm)
        throw InvalidObservation("RSSI " + std::to_string(rssi_dbm) + " dBm outside [-120, 0]");
}

NetworkSelector NetworkSelector::ssid(std::string name) {
    return NetworkSelector(By::Ssid, std::move(name));
}

NetworkSelector NetworkSelector::mac(std::string_view address) {
    return NetworkSelector(By::Mac, normalize_mac(address));
}

bool NetworkSelector::matches(const NetworkObservation& obs) const noexcept {
    if (by_ == By::Mac) return obs.mac() == value_;
    return !obs.ssid().empty() && obs.ssid() == value_;
}

const NetworkObservation* Fingerprint::find(NetworkKind kind, const std::string& mac) const {
    auto it = observations_.find(Key{kind, mac});
    return it == observations_.end() ? nullptr : &it->second;
}

std::vector<NetworkObservation> Fingerprint::observations() const {
    std::vector<NetworkObservation> out;
    out.reserve(observations_.size());
    for (const auto& [key, obs] : observations_) out.push_back(obs);
    return out;
}

Fingerprint merge_observation(Fingerprint fp, const NetworkObservation& obs) {
    Fingerprint::Key key{obs.kind(), obs.mac()};
    auto it = fp.observations_.find(key);
    if (it == fp.observations_.end()) {
        fp.observations_.emplace(std::move(key), obs);
    } else if (obs.observed_at() >= it->second.observed_at()) {
        it->second = obs;
    }
    return fp;
}

Fingerprint prune_stale(const Fingerprint& fp, Timestamp now, Timestamp ttl_ms) {
    if (ttl_ms <= 0) throw std::invalid_argument("ttl_ms must be positive");
    Fingerprint out;
    for (const auto& [key, obs] : fp.observations_) {
        if (now - obs.observed_at() <= ttl_ms) out.observations_.emplace(key, obs);
    }
    return out;
}

bool is_visible(const Fingerprint& fp, const NetworkSelector& sel) {
    return std::any_of(fp.begin(), fp.end(),
                       [&](const auto& entry) { return sel.matches(entry.second); });
}

std::optional<int> observed_rssi(const Fingerprint& fp, const NetworkSelector& sel) {
    std::optional<int> best;
    for (const auto& [key, obs] : fp) {
        if (sel.matches(obs) && (!best || obs.rssi() > *best)) best = obs.rssi();
    }
    return best;
}

std::string to_canonical_json(const Fingerprint& fp) {
    auto array = nlohmann::ordered_json::array();
    for (const auto& [key, obs] : fp) {
        array.push_back({{"SSID", obs.ssid()},
                         {"MAC", obs.mac()},
                         {"RSSI", obs.rssi()},
                         {"kind", to_string(obs.kind())},
                         {"ts", obs.observed_at()}});
    }
    return array.dump();
}

std::vector<NetworkObservation> observations_from_json(std::string_view text, Timestamp default_ts) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FingerprintFormatError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw FingerprintFormatError("fingerprint must be a JSON array");

    std::vector<NetworkObservation> out;
    out.reserve(doc.size());
    for (const auto& item : doc) {
        if (!item.is_object()) throw FingerprintFormatError("observation must be an object");
        const auto ssid = item.find("SSID");
        const auto mac = item.find("MAC");
        const auto rssi = item.find("RSSI");
        if (ssid == item.end() || !ssid->is_string())
            throw FingerprintFormatError("observation needs string SSID");
        if (mac == item.end() || !mac->is_string())
            throw FingerprintFormatError("observation needs string MAC");
        if (rssi == item.end() || !rssi->is_number_integer())
            throw FingerprintFormatError("observation needs integer RSSI");

        NetworkKind kind = NetworkKind::Wifi;
        if (auto k = item.find("kind"); k != item.end()) {
            auto parsed = k->is_string() ? parse_network_kind(k->get<std::string>()) : std::nullopt;
            if (!parsed) throw FingerprintFormatError("kind must be \"wifi\" or \"bluetooth\"");
            kind = *parsed;
        }
        Timestamp ts = default_ts;
        if (auto t = item.find("ts"); t != item.end()) {
            if (!t->is_number_integer()) throw FingerprintFormatError("ts must be an integer");
            ts = t->get<Timestamp>();
        }
        const auto rssi_value = rssi->get<std::int64_t>();
        if (rssi_value < kMinRssiDbm || rssi_value > kMaxRssiDbm)
            throw InvalidObservation("RSSI " + std::to_string(rssi_value) + " dBm outside [-120, 0]");

        out.emplace_back(NetworkId(ssid->get<std::string>(), mac->get<std::string>()), kind,
                         static_cast<int>(rssi_value), ts);
    }
    return out;
}

Fingerprint fingerprint_from_json(std::string_view text, Timestamp default_ts) {
    Fingerprint fp;
    for (const auto& obs : observations_from_json(text, default_ts)) fp = merge_observation(std::move(fp), obs);
    return fp;
}

}  // namespace spotex
