// SPDX-License-Identifier: Apache-2.0
#include "tilec/transforms/tile_fuse.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "util.hpp"

namespace tilec {

using detail::top_level_defs;

namespace {

bool is_packed_elementwise(const Function& fn, const Op& op) {
  return (op.kind == OpKind::BiasAdd || op.kind == OpKind::Relu) && op.result &&
         fn.type(op.operands[0]).is_tensor() && fn.type(op.operands[0]).rank() == 4;
}

}  // namespace

std::vector<FusionCluster> build_fusion_clusters(const Function& fn, bool fuse) {
  const auto& ops = fn.body.ops;
  auto uses = use_counts(fn);
  std::map<ValueId, size_t> def_index;
  // users[v]: top-level ops reading v (nested uses are not fusable).
  std::map<ValueId, std::vector<size_t>> users;
  for (size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].result) def_index[*ops[i].result] = i;
    for (ValueId v : ops[i].operands) users[v].push_back(i);
  }
  std::set<size_t> claimed;
  std::vector<FusionCluster> clusters;
  for (size_t k = ops.size(); k-- > 0;) {
    const Op& anchor = ops[k];
    if (anchor.kind != OpKind::PackedMatmul || !anchor.result) continue;
    FusionCluster cluster{k, {}};
    const Type& domain = fn.type(*anchor.result);
    auto fusable = [&](size_t i) {
      return !claimed.count(i) && is_packed_elementwise(fn, ops[i]) &&
             fn.type(*ops[i].result) == domain;
    };
    if (fuse) {
      ValueId cur = *anchor.result;
      while (uses[static_cast<size_t>(cur)] == 1 && users[cur].size() == 1) {
        size_t u = users[cur].front();
        if (!fusable(u) || ops[u].operands[0] != cur) break;
        cluster.members.push_back(u);
        cur = *ops[u].result;
      }
      ValueId init = anchor.operands[2];
      while (uses[static_cast<size_t>(init)] == 1) {
        auto it = def_index.find(init);
        if (it == def_index.end() || !fusable(it->second)) break;
        cluster.members.push_back(it->second);
        init = ops[it->second].operands[0];
      }
    }
    std::sort(cluster.members.begin(), cluster.members.end());
    claimed.insert(k);
    claimed.insert(cluster.members.begin(), cluster.members.end());
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

namespace {

ValueId extract(OpBuilder& b, ValueId src, IntList dims, std::vector<ValueId> at) {
  const Type& t = b.function().type(src);
  std::vector<int64_t> shape;
  for (size_t d = 0; d < t.shape.size(); ++d) {
    if (std::find(dims.begin(), dims.end(), static_cast<int64_t>(d)) == dims.end()) {
      shape.push_back(t.shape[d]);
    }
  }
  std::vector<ValueId> operands{src};
  operands.insert(operands.end(), at.begin(), at.end());
  return b.create(OpKind::ExtractSlice, std::move(operands), {{"dims", std::move(dims)}},
                  Type::tensor(shape, t.elem));
}

// Emits forall(dest) over [MB, NB] whose body runs `chain` on the C tile.
// The forall takes over `result`.
void emit_forall(Function& fn, OpBuilder& b, ValueId dest, ValueId result,
                 const std::vector<const Op*>& chain, const Op* anchor, bool zero_init) {
  const Type ctype = fn.type(dest);
  Op forall;
  forall.kind = OpKind::Forall;
  forall.result = result;
  forall.operands = {dest};
  forall.attrs["bounds"] = IntList{ctype.shape[0], ctype.shape[1]};
  forall.regions.resize(1);
  Block& body = forall.regions[0];
  ValueId i = fn.new_value(Type::index());
  ValueId j = fn.new_value(Type::index());
  ValueId o = fn.new_value(ctype);
  body.args = {i, j, o};
  OpBuilder ib(fn, body);

  ValueId a_tile = -1, b_tile = -1;
  if (anchor) {
    a_tile = extract(ib, anchor->operands[0], {0}, {i});
    b_tile = extract(ib, anchor->operands[1], {0}, {j});
  }
  std::map<const Op*, ValueId> bias_tiles;
  for (const Op* op : chain) {
    if (op->kind == OpKind::BiasAdd) bias_tiles[op] = extract(ib, op->operands[1], {0}, {j});
  }
  Type tile = Type::tensor({ctype.shape[2], ctype.shape[3]}, ctype.elem);
  ValueId c = extract(ib, o, {0, 1}, {i, j});
  if (zero_init) c = ib.create(OpKind::TileZero, {c}, {}, tile);
  for (const Op* op : chain) {
    switch (op->kind) {
      case OpKind::PackedMatmul: {
        AttrDict attrs;
        if (op->bool_attr("vnni")) attrs["vnni"] = true;
        c = ib.create(OpKind::TileMatmulAccum, {a_tile, b_tile, c}, std::move(attrs), tile);
        break;
      }
      case OpKind::BiasAdd:
        c = ib.create(OpKind::TileBiasAdd, {c, bias_tiles.at(op)}, {}, tile);
        break;
      case OpKind::Relu:
        c = ib.create(OpKind::TileRelu, {c}, {}, tile);
        break;
      default:
        throw CompileError("tile-fuse: unexpected op in cluster");
    }
  }
  ib.create_void(OpKind::InsertSlice, {c, o, i, j}, {{"dims", IntList{0, 1}}});
  b.append(std::move(forall));
}

}  // namespace

Function tile_and_fuse(const Function& fn, const std::vector<FusionCluster>& clusters) {
  const auto& ops = fn.body.ops;
  auto defs = top_level_defs(fn);
  std::map<size_t, const FusionCluster*> by_last;
  std::set<size_t> in_cluster;
  for (const FusionCluster& cl : clusters) {
    size_t last = cl.members.empty() ? cl.anchor : std::max(cl.anchor, cl.members.back());
    by_last[last] = &cl;
    in_cluster.insert(cl.anchor);
    in_cluster.insert(cl.members.begin(), cl.members.end());
  }
  Function out = fn;
  out.body.ops.clear();
  OpBuilder b(out, out.body);
  for (size_t k = 0; k < ops.size(); ++k) {
    const Op& op = ops[k];
    if (auto it = by_last.find(k); it != by_last.end()) {
      const FusionCluster& cl = *it->second;
      const Op& anchor = ops[cl.anchor];
      const Type& domain = fn.type(*anchor.result);
      std::vector<const Op*> producers, chain;
      for (size_t m : cl.members) {
        if (fn.type(*ops[m].result) != domain) {
          throw CompileError("tile-fuse: cluster member '" + std::string(op_name(ops[m].kind)) +
                             "' has domain " + to_string(fn.type(*ops[m].result)) +
                             ", anchor has " + to_string(domain));
        }
        (m < cl.anchor ? producers : chain).push_back(&ops[m]);
      }
      chain.insert(chain.begin(), &anchor);
      chain.insert(chain.begin(), producers.begin(), producers.end());
      ValueId root = producers.empty() ? anchor.operands[2] : producers.front()->operands[0];
      bool zero = producers.empty() && detail::is_zero_splat(defs[static_cast<size_t>(root)]);
      ValueId dest = zero ? b.create(OpKind::Empty, {}, {}, domain) : root;
      emit_forall(out, b, dest, *ops[k].result, chain, &anchor, zero);
      continue;
    }
    if (in_cluster.count(k)) continue;
    if (is_packed_elementwise(fn, op)) {
      emit_forall(out, b, op.operands[0], *op.result, {&op}, nullptr, false);
      continue;
    }
    b.append(op);
  }
  eliminate_dead_ops(out);
  renumber(out);
  return out;
}

Module tile_and_fuse(const Module& module, bool fuse) {
  return detail::map_functions(module, [&](const Function& f) {
    return tile_and_fuse(f, build_fusion_clusters(f, fuse));
  });
}

}  // namespace tilec
