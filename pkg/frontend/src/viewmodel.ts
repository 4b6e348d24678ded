import type { Catalog, SessionBody, Weights } from "./types.js";

export interface AttributeRow {
  name: string;
  /** 0-100 integer slider position; relative units the server renormalizes. */
  slider: number;
  /** Last server-normalized weight, for display; null until acknowledged. */
  serverWeight: number | null;
}

export interface CategoryRow {
  category: string;
  attributes: AttributeRow[];
}

const SLIDER_MAX = 100;

function clampSlider(value: number): number {
  return Math.min(SLIDER_MAX, Math.max(0, Math.round(value)));
}

/**
 * Editable mirror of the server's attribute table.
 *
 * The view model never computes weights: sliders are sent raw and the rows'
 * serverWeight fields are overwritten from every server acknowledgement, so
 * rendered numbers always equal server state.
 */
export class TableViewModel {
  rows: CategoryRow[] = [];
  dirty = false;
  violations: string[] = [];

  static fromSession(body: SessionBody): TableViewModel {
    const vm = new TableViewModel();
    vm.applyServer(body);
    return vm;
  }

  /** Replace local state with the server's; clears edits and violations. */
  applyServer(body: SessionBody): void {
    this.rows = Object.entries(body.catalog).map(([category, attrs]) => ({
      category,
      attributes: attrs.map((name) => {
        const weight = body.weights[category]?.[name] ?? 0;
        return {
          name,
          slider: clampSlider(weight * SLIDER_MAX),
          serverWeight: weight,
        };
      }),
    }));
    this.dirty = false;
    this.violations = [];
  }

  /** Keep local edits; surface the server's validation messages. */
  applyViolations(violations: string[]): void {
    this.violations = violations;
  }

  private category(name: string): CategoryRow {
    const row = this.rows.find((r) => r.category === name);
    if (!row) throw new Error(`no category ${name}`);
    return row;
  }

  addCategory(name: string, attributes: string[]): void {
    if (this.rows.some((r) => r.category === name)) {
      throw new Error(`category ${name} already exists`);
    }
    this.rows.push({
      category: name,
      attributes: attributes.map((a) => ({ name: a, slider: 50, serverWeight: null })),
    });
    this.dirty = true;
  }

  removeCategory(name: string): void {
    this.rows = this.rows.filter((r) => r.category !== name);
    this.dirty = true;
  }

  addAttribute(category: string, name: string): void {
    const row = this.category(category);
    if (row.attributes.some((a) => a.name === name)) {
      throw new Error(`attribute ${name} already in ${category}`);
    }
    row.attributes.push({ name, slider: 50, serverWeight: null });
    this.dirty = true;
  }

  removeAttribute(category: string, name: string): void {
    const row = this.category(category);
    row.attributes = row.attributes.filter((a) => a.name !== name);
    this.dirty = true;
  }

  setSlider(category: string, name: string, value: number): void {
    const attr = this.category(category).attributes.find((a) => a.name === name);
    if (!attr) throw new Error(`no attribute ${name} in ${category}`);
    attr.slider = clampSlider(value);
    this.dirty = true;
  }

  /** Request body for PUT table: catalog order as displayed, raw sliders. */
  toUpdateBody(): { catalog: Catalog; weights: Weights } {
    const catalog: Catalog = {};
    const weights: Weights = {};
    for (const row of this.rows) {
      catalog[row.category] = row.attributes.map((a) => a.name);
      weights[row.category] = Object.fromEntries(
        row.attributes.map((a) => [a.name, a.slider]),
      );
    }
    return { catalog, weights };
  }
}
