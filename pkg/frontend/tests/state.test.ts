import { describe, expect, it } from "vitest";

import {
  axes,
  cellQuery,
  heatmapQuery,
  initialState,
  isValueAllowed,
  loadParams,
  setMode,
  setSliderValue,
} from "../src/state.js";
import { heatmapFixture, heatmapSliderFixture, paramsFixture } from "./fixtures.js";

function freshState() {
  const state = initialState();
  loadParams(state, paramsFixture.run, paramsFixture.params);
  return state;
}

function totalN(matrix: typeof heatmapFixture): number {
  return matrix.cells.flat().reduce((sum, cell) => sum + cell.n, 0);
}

describe("axis assignment", () => {
  it("requires exactly two axes before a heatmap query exists", () => {
    const state = freshState();
    expect(axes(state)).toBeNull();
    expect(heatmapQuery(state)).toBeNull();

    setMode(state, "orientation.yaw", "axis_x");
    expect(axes(state)).toBeNull(); // still only one axis
    expect(heatmapQuery(state)).toBeNull();

    setMode(state, "texture_swap.texture", "axis_y");
    expect(axes(state)).toEqual({ x: "orientation.yaw", y: "texture_swap.texture" });
    expect(heatmapQuery(state)).not.toBeNull();
  });

  it("reassigning an axis role steals it from the previous holder", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "axis_x");
    setMode(state, "texture_swap.texture", "axis_y");
    setMode(state, "mesh", "axis_x"); // steals x from orientation.yaw
    expect(state.params.get("orientation.yaw")?.mode).toBe("aggregate");
    expect(axes(state)).toEqual({ x: "mesh", y: "texture_swap.texture" });
  });

  it("builds the query that produced the heatmap fixture", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "axis_x");
    setMode(state, "texture_swap.texture", "axis_y");
    const query = heatmapQuery(state)!;
    expect(query.get("run")).toBe(paramsFixture.run);
    expect(query.get("x")).toBe(heatmapFixture.x_key);
    expect(query.get("y")).toBe(heatmapFixture.y_key);
    expect([...query.keys()].sort()).toEqual(["run", "x", "y"]);
  });
});

describe("slider mode", () => {
  it("adds an exact-match filter parameter to the query", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "axis_x");
    setMode(state, "texture_swap.texture", "axis_y");
    setMode(state, "mesh", "slider");
    setSliderValue(state, "mesh", "cube_red");
    const query = heatmapQuery(state)!;
    // exactly the query that produced heatmapSliderFixture
    expect(query.get("mesh")).toBe("cube_red");
    expect([...query.keys()].sort()).toEqual(["mesh", "run", "x", "y"]);
  });

  it("slider filtering shrinks cell totals per the fixture pair", () => {
    // 24 records unfiltered; pinning mesh=cube_red keeps half of them
    expect(totalN(heatmapFixture)).toBe(24);
    expect(totalN(heatmapSliderFixture)).toBe(12);
    expect(totalN(heatmapSliderFixture)).toBeLessThan(totalN(heatmapFixture));
  });

  it("entering slider mode defaults to the first observed value", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "slider");
    expect(state.params.get("orientation.yaw")?.sliderValue).toBe(-0.8);
  });

  it("rejects slider values outside the parameter range", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "slider");
    expect(() => setSliderValue(state, "orientation.yaw", 5.0)).toThrow(/outside/);
    const yaw = paramsFixture.params.find((p) => p.name === "orientation.yaw")!;
    expect(isValueAllowed(yaw, 0.0)).toBe(true);
    expect(isValueAllowed(yaw, 0.81)).toBe(false);
    const mesh = paramsFixture.params.find((p) => p.name === "mesh")!;
    expect(isValueAllowed(mesh, "cube_red")).toBe(true);
    expect(isValueAllowed(mesh, "pyramid")).toBe(false);
  });

  it("leaving slider mode clears the value and the filter", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "axis_x");
    setMode(state, "texture_swap.texture", "axis_y");
    setMode(state, "mesh", "slider");
    setSliderValue(state, "mesh", "cube_blue");
    setMode(state, "mesh", "aggregate");
    const query = heatmapQuery(state)!;
    expect(query.has("mesh")).toBe(false);
  });
});

describe("cell queries", () => {
  it("appends the hovered cell to the active filter query", () => {
    const state = freshState();
    setMode(state, "orientation.yaw", "axis_x");
    setMode(state, "texture_swap.texture", "axis_y");
    const query = cellQuery(state, 0, 0)!;
    expect(query.get("cell")).toBe("0,0");
    expect(query.get("x")).toBe("orientation.yaw");
  });

  it("is unavailable while axes are incomplete", () => {
    const state = freshState();
    expect(cellQuery(state, 0, 0)).toBeNull();
  });
});
