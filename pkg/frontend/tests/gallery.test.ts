import { describe, expect, it } from "vitest";

import { GALLERY_PAGE_SIZE, renderGallery, thumbnailUrl } from "../src/gallery.js";
import { recordsCell00Fixture } from "./fixtures.js";

describe("cell gallery", () => {
  it("shows exactly the cell's records", () => {
    const html = renderGallery(recordsCell00Fixture, "", "demo");
    const tiles = html.match(/data-record-id="\d+"/g) ?? [];
    expect(recordsCell00Fixture.n).toBe(4);
    expect(tiles.length).toBe(recordsCell00Fixture.n);
    for (const record of recordsCell00Fixture.records) {
      expect(html).toContain(`data-record-id="${record.id}"`);
    }
  });

  it("colors tile borders by correctness", () => {
    const html = renderGallery(recordsCell00Fixture, "", "demo");
    const incorrect = recordsCell00Fixture.records.filter((r) => r.is_correct === false);
    expect((html.match(/tile-incorrect/g) ?? []).length).toBe(incorrect.length);
    const correct = recordsCell00Fixture.records.filter((r) => r.is_correct === true);
    expect((html.match(/tile-correct/g) ?? []).length).toBe(correct.length);
  });

  it("shows each record's top-1 label from the API", () => {
    const html = renderGallery(recordsCell00Fixture, "", "demo");
    for (const record of recordsCell00Fixture.records) {
      expect(html).toContain(`<span class="tile-label">${record.prediction?.top1_label}</span>`);
    }
  });

  it("links thumbnails to the render endpoint", () => {
    const html = renderGallery(recordsCell00Fixture, "http://api:8008", "demo run");
    expect(html).toContain(thumbnailUrl("http://api:8008", "demo run", recordsCell00Fixture.records[0].id));
    expect(thumbnailUrl("", "demo run", 3)).toBe("/api/render/3.png?run=demo%20run");
  });

  it("renders the empty-cell state", () => {
    const html = renderGallery({ x_value: 0, y_value: "a", n: 0, records: [] }, "", "demo");
    expect(html).toContain("no samples");
  });

  it("paginates long record lists", () => {
    const many = {
      x_value: 0,
      y_value: "a",
      n: 30,
      records: Array.from({ length: 30 }, (_, id) => ({
        id,
        mesh: "m",
        environment: "e",
        is_correct: id % 2 === 0,
        values: {},
        prediction: { top1_label: "x" },
      })),
    };
    const first = renderGallery(many, "", "demo", 0);
    expect((first.match(/data-record-id="\d+"/g) ?? []).length).toBe(GALLERY_PAGE_SIZE);
    expect(first).toContain(`data-pages="3"`);
    const last = renderGallery(many, "", "demo", 2);
    expect((last.match(/data-record-id="\d+"/g) ?? []).length).toBe(30 - 2 * GALLERY_PAGE_SIZE);
  });

  it("snapshot of the demo cell gallery markup", () => {
    expect(renderGallery(recordsCell00Fixture, "", "demo")).toMatchSnapshot();
  });
});
