#include "abtm/memory.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>

#include "abtm/error.hpp"

namespace abtm {

namespace {

std::uint64_t bits_of(double v) noexcept { return std::bit_cast<std::uint64_t>(v); }

bool same_bits(double a, double b) noexcept { return bits_of(a) == bits_of(b); }

void append_hex16(std::string& out, std::uint64_t bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  for (int shift = 60; shift >= 0; shift -= 4) {
    out.push_back(kDigits[(bits >> shift) & 0xf]);
  }
}

}  // namespace

bool is_state_key(std::string_view key) noexcept { return key.starts_with(kStatePrefix); }

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t Memory::KeyHash::operator()(std::string_view key) const noexcept {
  return static_cast<std::size_t>(fnv1a64(key));
}

SlotId Memory::add(std::string key, Scope scope, double initial, bool local) {
  auto id = static_cast<SlotId>(vars_.size());
  index_.emplace(key, id);
  vars_.push_back(Variable{std::move(key), initial, scope, local, true});
  dirty_.emplace_back();
  return id;
}

void Memory::declare(std::string_view key, Scope scope, double initial, bool local) {
  if (is_state_key(key)) {
    throw Error(ErrorCode::ReservedKey, "key '" + std::string(key) + "' uses the reserved prefix");
  }
  if (index_.contains(key)) {
    throw Error(ErrorCode::DuplicateKey, "key '" + std::string(key) + "' already declared");
  }
  add(std::string(key), scope, initial, local);
}

bool Memory::contains(std::string_view key) const { return index_.contains(key); }

std::optional<SlotId> Memory::find(std::string_view key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SlotId Memory::slot(std::string_view key) {
  if (auto found = find(key)) return *found;
  if (is_state_key(key)) {
    throw Error(ErrorCode::ReservedKey, "key '" + std::string(key) + "' uses the reserved prefix");
  }
  return add(std::string(key), Scope::Input, 0.0, key == kTimeKey);
}

SlotId Memory::declare_state(std::string key, double initial) {
  if (!is_state_key(key)) {
    throw Error(ErrorCode::InvalidArgument, "node state key must use the reserved prefix");
  }
  if (index_.contains(key)) {
    throw Error(ErrorCode::DuplicateKey, "key '" + key + "' already declared");
  }
  return add(std::move(key), Scope::Input, initial, false);
}

void Memory::mark_dirty(SlotId slot, double old_value) {
  DirtyEntry& entry = dirty_[slot];
  if (!entry.active) {
    entry.active = true;
    entry.baseline = old_value;
    if (!entry.listed) {
      entry.listed = true;
      dirty_order_.push_back(slot);
    }
  } else if (same_bits(entry.baseline, vars_[slot].value)) {
    // Back to the value it had at the last clear.
    entry.active = false;
  }
}

bool Memory::assign(SlotId slot, double value) {
  Variable& var = vars_[slot];
  if (same_bits(var.value, value)) {
    var.present = true;
    return false;
  }
  double old = var.value;
  var.value = value;
  var.present = true;
  mark_dirty(slot, old);
  if (var.scope == Scope::Output) {
    output_log_.insert_or_assign(var.key, value);
  }
  return true;
}

std::size_t Memory::apply(const Sample& changes) {
  std::size_t changed = 0;
  for (const auto& [key, value] : changes) changed += assign(slot(key), value) ? 1 : 0;
  return changed;
}

std::vector<std::string> Memory::set(const Sample& changes) {
  std::vector<std::string> changed;
  for (const auto& [key, value] : changes) {
    if (assign(slot(key), value)) changed.push_back(key);
  }
  return changed;
}

double Memory::get(std::string_view key) { return vars_[slot(key)].value; }

double Memory::peek(std::string_view key) const {
  auto found = find(key);
  return found ? vars_[*found].value : 0.0;
}

Sample Memory::drain_output_changes() {
  Sample out;
  out.swap(output_log_);
  return out;
}

const std::vector<SlotId>& Memory::dirty_slots() const {
  std::erase_if(dirty_order_, [this](SlotId s) {
    if (dirty_[s].active) return false;
    dirty_[s].listed = false;
    return true;
  });
  return dirty_order_;
}

std::vector<std::string> Memory::dirty_keys() const {
  std::vector<std::string> keys;
  for (SlotId s : dirty_slots()) keys.push_back(vars_[s].key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

void Memory::clear_dirty() {
  if (dirty_order_.empty()) return;
  for (SlotId s : dirty_order_) dirty_[s] = DirtyEntry{};
  dirty_order_.clear();
}

const std::vector<SlotId>& Memory::sorted_slots() const {
  if (sorted_.size() != vars_.size()) {
    sorted_.resize(vars_.size());
    for (SlotId i = 0; i < vars_.size(); ++i) sorted_[i] = i;
    std::sort(sorted_.begin(), sorted_.end(), [this](SlotId a, SlotId b) { return vars_[a].key < vars_[b].key; });
  }
  return sorted_;
}

std::string Memory::canonical_snapshot() const {
  std::string out;
  for (SlotId id : sorted_slots()) {
    const Variable& var = vars_[id];
    if (var.local || !var.present) continue;
    out.append(var.key);
    out.push_back('=');
    append_hex16(out, bits_of(var.value));
    out.push_back(';');
  }
  return out;
}

std::uint64_t Memory::hash() const { return fnv1a64(canonical_snapshot()); }

std::optional<std::vector<std::pair<std::string, double>>> parse_snapshot(std::string_view text) {
  std::vector<std::pair<std::string, double>> entries;
  std::string_view prev_key;
  while (!text.empty()) {
    auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    std::string_view key = text.substr(0, eq);
    if (key.find(';') != std::string_view::npos) return std::nullopt;
    if (!entries.empty() && !(prev_key < key)) return std::nullopt;
    text.remove_prefix(eq + 1);
    if (text.size() < 17 || text[16] != ';') return std::nullopt;
    std::uint64_t bits = 0;
    for (char c : text.substr(0, 16)) {
      if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return std::nullopt;
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + 16, bits, 16);
    if (ec != std::errc() || ptr != text.data() + 16) return std::nullopt;
    entries.emplace_back(std::string(key), std::bit_cast<double>(bits));
    prev_key = key;
    text.remove_prefix(17);
  }
  return entries;
}

void Memory::adopt_snapshot(std::string_view snapshot) {
  auto entries = parse_snapshot(snapshot);
  if (!entries) throw Error(ErrorCode::MalformedDump, "variable dump does not parse");

  std::vector<bool> mentioned(vars_.size(), false);
  for (auto& [key, value] : *entries) {
    SlotId id;
    if (auto found = find(key)) {
      id = *found;
    } else {
      id = add(key, Scope::Input, 0.0, false);
      mentioned.push_back(false);
    }
    mentioned[id] = true;
    Variable& var = vars_[id];
    if (var.local) continue;
    var.present = true;
    if (same_bits(var.value, value)) continue;
    double old = var.value;
    var.value = value;
    if (!is_state_key(var.key)) mark_dirty(id, old);
  }
  for (SlotId id = 0; id < vars_.size(); ++id) {
    Variable& var = vars_[id];
    if (mentioned[id] || var.local || !var.present) continue;
    // Behaves like a never-declared key from now on: reads as 0.0.
    var.present = false;
    if (!same_bits(var.value, 0.0)) {
      double old = var.value;
      var.value = 0.0;
      if (!is_state_key(var.key)) mark_dirty(id, old);
    }
  }
}

}  // namespace abtm
