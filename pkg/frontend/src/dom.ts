/** Tiny element builder; enough DOM sugar for two views. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<HTMLElement | string> = []
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof HTMLElement ? child : document.createTextNode(child));
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function banner(kind: "ok" | "error", text: string, retry?: () => void): HTMLElement {
  const children: Array<HTMLElement | string> = [text];
  if (retry) {
    const button = el("button", { class: "retry" }, ["retry"]);
    button.addEventListener("click", retry);
    children.push(button);
  }
  return el("div", { class: `banner ${kind}` }, children);
}
