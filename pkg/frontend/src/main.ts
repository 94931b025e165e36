import { renderClustersView } from "./clusters";
import { renderEpisodesView } from "./episodes";
import { clear, el } from "./dom";

type Tab = "clusters" | "episodes";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");

  const nav = el("nav", {}, []);
  const view = el("main", { id: "view" });
  root.append(nav, view);

  const tabs: Array<[Tab, string, (node: HTMLElement) => void]> = [
    ["clusters", "Part clusters", renderClustersView],
    ["episodes", "Navigation episodes", renderEpisodesView],
  ];

  const activate = (tab: Tab) => {
    clear(nav);
    for (const [id, label, render] of tabs) {
      const button = el("button", { class: id === tab ? "tab active" : "tab" }, [label]);
      button.addEventListener("click", () => activate(id));
      nav.append(button);
      if (id === tab) {
        clear(view);
        render(view);
      }
    }
    window.location.hash = tab;
  };

  const initial = window.location.hash === "#episodes" ? "episodes" : "clusters";
  activate(initial);
}

document.addEventListener("DOMContentLoaded", boot);
