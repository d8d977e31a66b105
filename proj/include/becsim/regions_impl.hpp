#pragma once

// Template definitions for regions.hpp.

namespace becsim::regions {

template <class Scalar>
Polyhedron<Scalar> stability_system(const ControlCatalog& catalog,
                                    const scheduler::TransitionTable& table,
                                    const std::function<Scalar(UserSet)>& pmf) {
  using scheduler::Edge;
  std::map<core::VirtualAddress, std::map<std::string, Scalar>> balance;
  for (int i = 0; i < catalog.n_users; ++i) {
    const core::VirtualAddress source{{UserSet{}, UserSet::single(i)}, i};
    balance[source][lambda_variable(i)] = Scalar(1);
  }
  Polyhedron<Scalar> poly;
  std::map<std::string, Scalar> total;
  for (const auto& spec : catalog.controls) {
    const auto* transitions = table.find(spec);
    if (transitions == nullptr) {
      throw Error(Error::Code::kConfig, "stability_system: table lacks " + spec.label());
    }
    const std::string phi = phi_variable(spec);
    for (const auto& node : transitions->nodes) {
      Scalar leaving(0);
      for (const auto& e : node.edges) {
        if (e.kind == Edge::Kind::kSelf) continue;
        Scalar p(0);
        for (UserSet s : e.outcomes) p += pmf(s);
        leaving += p;
        if (e.kind == Edge::Kind::kNode) balance[e.to][phi] += p;
      }
      balance[node.node][phi] -= leaving;
    }
    poly.add({{phi, Scalar(-1)}}, Scalar(0));
    total[phi] = Scalar(1);
    poly.nonnegative.insert(phi);
  }
  for (auto& [node, coeffs] : balance) {
    Inequality<Scalar> row{std::move(coeffs), Scalar(0)};
    fm_detail::drop_zeros(row);
    if (!row.coeffs.empty()) poly.rows.push_back(std::move(row));
  }
  poly.add(std::move(total), Scalar(1));
  for (int i = 0; i < catalog.n_users; ++i) poly.nonnegative.insert(lambda_variable(i));
  return poly;
}

}  // namespace becsim::regions
