#include "paravul/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "paravul/error.hpp"
#include "paravul/random.hpp"

namespace paravul {

namespace {

constexpr std::array<std::string_view, 12> kFunctionNames = {
    "withdraw", "claim", "payout", "redeem", "collect", "release",
    "settle", "refund", "drain", "harvest", "cashOut", "exit"};
constexpr std::array<std::string_view, 10> kVarNames = {
    "balances", "deposits", "credit", "shares", "stakes", "ledger", "owed", "funds", "vault", "accounts"};
constexpr std::array<std::string_view, 8> kAddrNames = {
    "owner", "admin", "treasury", "operator", "beneficiary", "controller", "manager", "keeper"};
constexpr std::array<std::string_view, 10> kContractNames = {
    "Bank", "Wallet", "Lottery", "Token", "Auction", "Escrow", "Crowdsale", "Vault", "Exchange", "Registry"};

// Planted vulnerability snippets, several variants per synthetic label.
// $F function name, $V mapping name, $A privileged address, $N number.
const std::vector<std::vector<std::string_view>> kPatterns = {
    // reentrancy: external call before the state update
    {"function $F(uint amount) public {\n"
     "    require($V[msg.sender] >= amount);\n"
     "    (bool ok, ) = msg.sender.call{value: amount}(\"\");\n"
     "    require(ok);\n"
     "    $V[msg.sender] -= amount;\n"
     "}\n",
     "function $F() external {\n"
     "    uint due = $V[msg.sender];\n"
     "    msg.sender.call.value(due)();\n"
     "    $V[msg.sender] = 0;\n"
     "}\n",
     "function $F(address payable to) public {\n"
     "    uint value = $V[to];\n"
     "    if (value > 0) {\n"
     "        (bool sent, ) = to.call{value: value}(\"\");\n"
     "        require(sent, \"send failed\");\n"
     "        $V[to] = 0;\n"
     "    }\n"
     "}\n"},
    // integer overflow: unchecked arithmetic on balances
    {"function $FMint(uint amount) public {\n"
     "    unchecked {\n"
     "        $V[msg.sender] += amount * $N;\n"
     "        totalSupply += amount * $N;\n"
     "    }\n"
     "}\n",
     "function $FBatch(address[] memory to, uint value) public {\n"
     "    uint total = to.length * value;\n"
     "    require($V[msg.sender] >= total);\n"
     "    $V[msg.sender] -= total;\n"
     "    for (uint i = 0; i < to.length; i++) { $V[to[i]] += value; }\n"
     "}\n",
     "function $FAdd(uint8 a, uint8 b) public pure returns (uint8) {\n"
     "    unchecked { return a + b + $N; }\n"
     "}\n"},
    // unchecked low-level call: return value ignored
    {"function $FForward(address payable dest, uint amount) public {\n"
     "    dest.send(amount);\n"
     "}\n",
     "function $FExec(address target, bytes memory data) public {\n"
     "    target.call(data);\n"
     "    emit Executed(target);\n"
     "}\n",
     "function $FPay(address payable dest) public {\n"
     "    dest.send($V[dest]);\n"
     "    $V[dest] = 0;\n"
     "}\n"},
    // timestamp dependency
    {"function $FDraw() public {\n"
     "    if (block.timestamp % $N == 0) {\n"
     "        payable(msg.sender).transfer(address(this).balance);\n"
     "    }\n"
     "}\n",
     "function $FUnlock() public {\n"
     "    require(block.timestamp > unlockAt - $N);\n"
     "    uint seed = uint(keccak256(abi.encodePacked(block.timestamp)));\n"
     "    winner = seed % 2 == 0 ? msg.sender : $A;\n"
     "}\n",
     "function $FRandom() public view returns (uint) {\n"
     "    return uint(keccak256(abi.encodePacked(block.timestamp, block.difficulty))) % $N;\n"
     "}\n"},
    // tx.origin authentication
    {"function $FAdmin(address newOwner) public {\n"
     "    require(tx.origin == $A);\n"
     "    $A = newOwner;\n"
     "}\n",
     "modifier only$F() {\n"
     "    require(tx.origin == $A, \"not authorised\");\n"
     "    _;\n"
     "}\n",
     "function $FSweep(address payable to) public {\n"
     "    if (tx.origin != $A) { revert(); }\n"
     "    to.transfer(address(this).balance);\n"
     "}\n"},
};

// Safe look-alikes sharing vocabulary with each pattern.
const std::vector<std::vector<std::string_view>> kDecoys = {
    {"function $FSafe(uint amount) public {\n"
     "    require($V[msg.sender] >= amount);\n"
     "    $V[msg.sender] -= amount;\n"
     "    (bool ok, ) = msg.sender.call{value: amount}(\"\");\n"
     "    require(ok);\n"
     "}\n"},
    {"function $FMintChecked(uint amount) public {\n"
     "    require(amount < $N);\n"
     "    $V[msg.sender] += amount;\n"
     "    totalSupply += amount;\n"
     "}\n"},
    {"function $FForwardChecked(address payable dest, uint amount) public {\n"
     "    bool ok = dest.send(amount);\n"
     "    require(ok, \"send failed\");\n"
     "}\n"},
    {"function $FStamp() public {\n"
     "    lastUpdate = block.timestamp;\n"
     "    emit Updated(lastUpdate);\n"
     "}\n"},
    {"function $FSetAdmin(address newOwner) public {\n"
     "    require(msg.sender == $A);\n"
     "    $A = newOwner;\n"
     "}\n"},
};

const std::vector<std::string_view> kFillers = {
    "function get$F() public view returns (uint) {\n    return $V[msg.sender];\n}\n",
    "function deposit$F() public payable {\n    $V[msg.sender] += msg.value;\n    emit Deposit(msg.sender, msg.value);\n}\n",
    "event Deposit(address indexed from, uint value);\n",
    "function set$FLimit(uint limit) public {\n    require(msg.sender == $A);\n    limits[msg.sender] = limit;\n}\n",
    "function name$F() public pure returns (string memory) {\n    return \"$F\";\n}\n",
    "function count$F(uint[] memory items) public pure returns (uint total) {\n"
    "    for (uint i = 0; i < items.length; i++) {\n        total += items[i] % $N;\n    }\n}\n",
    "modifier when$FActive() {\n    require(active, \"paused\");\n    _;\n}\n",
    "function pause$F() public {\n    require(msg.sender == $A);\n    active = false;\n}\n",
    "struct Position$F {\n    address holder;\n    uint amount;\n    uint openedAt;\n}\n",
    "function approve$F(address spender, uint value) public returns (bool) {\n"
    "    allowance[msg.sender][spender] = value;\n    return true;\n}\n",
    "function quote$F(uint amount) public view returns (uint) {\n    return amount * rate / $N;\n}\n",
    "function register$F(bytes32 key) public {\n    require(records[key] == address(0));\n    records[key] = msg.sender;\n}\n",
};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& items) {
    return items[rng.below(N)];
}

std::string expand(std::string_view tmpl, Rng& rng) {
    const std::string fn(pick(rng, kFunctionNames));
    const std::string var(pick(rng, kVarNames));
    const std::string addr(pick(rng, kAddrNames));
    const std::string num = std::to_string(2 + rng.below(98));
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '$' && i + 1 < tmpl.size()) {
            switch (tmpl[i + 1]) {
                case 'F': out += fn; ++i; continue;
                case 'V': out += var; ++i; continue;
                case 'A': out += addr; ++i; continue;
                case 'N': out += num; ++i; continue;
                default: break;
            }
        }
        out.push_back(tmpl[i]);
    }
    return out;
}

std::string indent(const std::string& block) {
    std::string out;
    std::size_t pos = 0;
    while (pos < block.size()) {
        auto eol = block.find('\n', pos);
        if (eol == std::string::npos) {
            eol = block.size();
        }
        out += "    ";
        out.append(block, pos, eol - pos);
        out.push_back('\n');
        pos = eol + 1;
    }
    return out;
}

}  // namespace

Dataset synthesize(const SynthOptions& options, const Taxonomy& taxonomy) {
    if (options.count == 0 || options.min_filler > options.max_filler || !(options.train_fraction >= 0.0) ||
        !(options.train_fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "invalid synthetic corpus options");
    }
    Rng rng(options.seed);
    const std::size_t labels = taxonomy.size();

    Dataset ds;
    ds.taxonomy = taxonomy;
    for (std::size_t n = 0; n < options.count; ++n) {
        LabelVector truth(labels);
        std::vector<std::string> blocks;
        for (std::size_t j = 0; j < labels; ++j) {
            const auto& variants = kPatterns[j % kPatterns.size()];
            if (rng.bernoulli(options.label_rate)) {
                truth.set(j);
                blocks.push_back(expand(variants[rng.below(variants.size())], rng));
            } else if (rng.bernoulli(options.decoy_rate)) {
                const auto& decoys = kDecoys[j % kDecoys.size()];
                blocks.push_back(expand(decoys[rng.below(decoys.size())], rng));
            }
        }
        const std::size_t fillers = options.min_filler + rng.below(options.max_filler - options.min_filler + 1);
        for (std::size_t f = 0; f < fillers; ++f) {
            blocks.push_back(expand(kFillers[rng.below(kFillers.size())], rng));
        }
        rng.shuffle(blocks);

        std::string src = "// SPDX-License-Identifier: MIT\npragma solidity ^0.8.0;\n\n";
        src += "contract " + std::string(pick(rng, kContractNames)) + std::to_string(n) + " {\n";
        src += "    address public " + std::string(pick(rng, kAddrNames)) + ";\n";
        src += "    mapping(address => uint) public " + std::string(pick(rng, kVarNames)) + ";\n\n";
        for (const auto& b : blocks) {
            src += indent(b);
            src += "\n";
        }
        src += "}\n";

        char id[32];
        std::snprintf(id, sizeof(id), "synth-%05zu", n);
        ds.contracts.push_back({id, preprocess(src), truth, Split::Test});
    }

    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    const auto train_count = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(ds.size())));
    for (std::size_t i = 0; i < train_count; ++i) {
        ds.contracts[order[i]].split = Split::Train;
    }
    ds.validate();
    return ds;
}

}  // namespace paravul
