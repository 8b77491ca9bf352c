"""Quick end-to-end check of the Python bindings.

Build first:  pip install --no-build-isolation -e crates/python
"""

import json

import graphpcg


def main():
    cs = graphpcg.ConstraintSet.load("set1_economy")
    assert cs.type_names() == ["Source", "Converter", "Pool"]
    assert cs.requires("V") == ["Source", "Pool"]
    assert cs.edge_allowed("Source", "Converter")
    assert not cs.edge_allowed("Source", "Pool")

    # U - V - W path: valid; drop an edge and V loses its W
    g = graphpcg.GraphState([0, 1, 2], 3, [(1, 0), (2, 1)])
    assert cs.is_valid(g) and cs.violations(g) == 0
    g.toggle(2, 1)
    assert cs.violations(g) == 2 and cs.node_violations(g) == [0, 1, 1]

    start = graphpcg.GraphState.random(cs, "Source=2,Converter=2,Pool=1", 6, seed=7)
    again = graphpcg.GraphState.random(cs, "Source=2,Converter=2,Pool=1", 6, seed=7)
    assert start == again and start.n == 6 and start.diagonal.count(3) == 1

    env = graphpcg.Env(cs, 5, "graph-wide")
    assert env.action_count == 20
    obs = env.reset("U=2,V=2,W=1", seed=1)
    rows, cols, symbols = env.observation_shape
    assert len(obs) == rows * cols * symbols and sum(obs) == rows * cols
    obs, reward, done, info = env.step(10)
    assert isinstance(reward, float) and "valid" in info

    found, stats = graphpcg.random_search(cs, "U=2,V=2,W=1", 5, seed=3)
    assert stats["success"] and cs.is_valid(found)
    found, stats = graphpcg.ea_generate(cs, "U=2,V=2,W=1", 5, seed=3)
    assert stats["success"] and cs.is_valid(found)

    doc = json.loads(found.to_json(cs))
    assert len(doc["nodes"]) == 5
    assert graphpcg.GraphState.from_json(found.to_json(cs), cs) == found
    assert found.to_dot(cs, ["Source", "Converter", "Pool"]).startswith("digraph")

    model = graphpcg.train(graphpcg.ConstraintSet.builtin(2), 4, steps=2500, seed=0)
    graph, valid, iterations = model.generate("U=2,V=2", seed=0)
    assert valid == model.constraints.is_valid(graph)
    assert iterations <= 2 * 6
    rate, mean_iters = model.validity_rate(samples=20)
    assert 0.0 <= rate <= 1.0

    parts = [graphpcg.ea_generate(cs, "U=1,V=2,W=1", 4, seed=s)[0] for s in range(3)]
    composite = graphpcg.compose(cs, parts, "Converter", "Pool", edges=1, seed=5)
    assert composite.num_subgraphs == 3 and composite.num_nodes == 12
    assert composite.is_valid()
    assert cs.is_valid(composite.flatten())

    try:
        graphpcg.ConstraintSet('{"U": ["X"]}')
    except ValueError:
        pass
    else:
        raise AssertionError("unknown requirement accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
