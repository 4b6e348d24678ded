import type { ResultCard } from "./types.js";
import type { TableViewModel } from "./viewmodel.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface TableHandlers {
  onSlider(category: string, attribute: string, value: number): void;
  onRemoveAttribute(category: string, attribute: string): void;
  onAddAttribute(category: string, attribute: string): void;
  onRemoveCategory(category: string): void;
  onAddCategory(category: string, attributes: string[]): void;
  onApply(): void;
}

export function renderTable(
  container: HTMLElement,
  vm: TableViewModel,
  handlers: TableHandlers,
): void {
  container.replaceChildren();

  for (const row of vm.rows) {
    const section = el("section", "category");
    const head = el("div", "category-head");
    head.append(el("h3", undefined, row.category));
    const removeCat = el("button", "ghost", "remove category");
    removeCat.addEventListener("click", () => handlers.onRemoveCategory(row.category));
    head.append(removeCat);
    section.append(head);

    for (const attr of row.attributes) {
      const line = el("div", "attribute");
      line.append(el("span", "attr-name", attr.name));

      const slider = el("input") as HTMLInputElement;
      slider.type = "range";
      slider.min = "0";
      slider.max = "100";
      slider.step = "1";
      slider.value = String(attr.slider);
      slider.addEventListener("input", () =>
        handlers.onSlider(row.category, attr.name, Number(slider.value)),
      );
      line.append(slider);

      const weight =
        attr.serverWeight === null
          ? "(pending)"
          : `${(attr.serverWeight * 100).toFixed(1)}%`;
      line.append(el("span", "weight", weight));

      const remove = el("button", "ghost", "x");
      remove.addEventListener("click", () =>
        handlers.onRemoveAttribute(row.category, attr.name),
      );
      line.append(remove);
      section.append(line);
    }

    const addAttr = el("div", "add-attribute");
    const input = el("input") as HTMLInputElement;
    input.placeholder = "new attribute";
    const button = el("button", undefined, "add");
    button.addEventListener("click", () => {
      if (input.value.trim()) {
        handlers.onAddAttribute(row.category, input.value.trim());
        input.value = "";
      }
    });
    addAttr.append(input, button);
    section.append(addAttr);
    container.append(section);
  }

  const addCat = el("div", "add-category");
  const nameInput = el("input") as HTMLInputElement;
  nameInput.placeholder = "new category";
  const attrsInput = el("input") as HTMLInputElement;
  attrsInput.placeholder = "attributes, comma-separated";
  const button = el("button", undefined, "add category");
  button.addEventListener("click", () => {
    const attrs = attrsInput.value.split(",").map((s) => s.trim()).filter(Boolean);
    if (nameInput.value.trim() && attrs.length) {
      handlers.onAddCategory(nameInput.value.trim(), attrs);
      nameInput.value = "";
      attrsInput.value = "";
    }
  });
  addCat.append(nameInput, attrsInput, button);
  container.append(addCat);

  if (vm.violations.length) {
    const box = el("div", "violations");
    for (const v of vm.violations) box.append(el("p", undefined, v));
    container.append(box);
  }

  const apply = el("button", "primary", vm.dirty ? "apply edits" : "table synced");
  (apply as HTMLButtonElement).disabled = !vm.dirty;
  apply.addEventListener("click", handlers.onApply);
  container.append(apply);
}

export function renderResults(container: HTMLElement, cards: ResultCard[]): void {
  container.replaceChildren();
  for (const card of cards) {
    const item = el("figure", "card");
    const img = el("img") as HTMLImageElement;
    img.src = card.image_url;
    img.alt = card.fused_prompt;
    item.append(img);
    const caption = el("figcaption");
    caption.append(el("p", "fused", card.fused_prompt));
    const chips = el("div", "chips");
    for (const [category, attr] of Object.entries(card.assignment)) {
      chips.append(el("span", "chip", `${category}: ${attr}`));
    }
    caption.append(chips);
    item.append(caption);
    container.append(item);
  }
}

export function renderStatus(container: HTMLElement, text: string, kind = "info"): void {
  container.textContent = text;
  container.className = `status ${kind}`;
}
