/** Episode review: inspect the top-down map and final view, mark 0/1. */

import { api, ApiError, EpisodePayload, ReviewSummary, Verdict } from "./api";
import { banner, clear, el } from "./dom";
import { summaryRows, withVerdict } from "./state";

interface ViewState {
  episodes: EpisodePayload[];
  summary: ReviewSummary | null;
  selected: string | null;
}

export function renderEpisodesView(root: HTMLElement): void {
  clear(root);
  const state: ViewState = { episodes: [], summary: null, selected: null };
  const summaryBox = el("div", { class: "summary" });
  const listBox = el("div", { class: "episode-list" });
  const detailBox = el("div", { class: "detail" });
  const status = el("div", { class: "status" });
  root.append(status, summaryBox, listBox, detailBox);

  const load = async () => {
    clear(status);
    try {
      const payload = await api.listEpisodes();
      state.episodes = payload.episodes;
      state.summary = payload.summary;
      if (!state.selected && payload.episodes.length) {
        state.selected = payload.episodes[0].id;
      }
      redraw();
    } catch (err) {
      status.append(banner("error", describe(err), load));
    }
  };

  const redraw = () => {
    drawSummary();
    drawList();
    drawDetail();
  };

  const drawSummary = () => {
    clear(summaryBox);
    if (!state.summary) return;
    const table = el("table", { class: "sr-table" });
    table.append(
      el("tr", {}, [
        el("th", {}, ["run"]),
        el("th", {}, ["automatic SR"]),
        el("th", {}, ["manual SR"]),
      ])
    );
    for (const [label, auto, manual] of summaryRows(state.summary, state.episodes)) {
      table.append(
        el("tr", {}, [el("td", {}, [label]), el("td", {}, [auto]), el("td", {}, [manual])])
      );
    }
    const reviewed = state.episodes.filter((e) => e.review !== null).length;
    const coverage = state.episodes.length
      ? ((100 * reviewed) / state.episodes.length).toFixed(0)
      : "0";
    summaryBox.append(table, el("p", {}, [`review coverage: ${coverage}%`]));
  };

  const drawList = () => {
    clear(listBox);
    for (const episode of state.episodes) {
      const flags = [
        episode.success ? "auto ✓" : "auto ✗",
        episode.review === null ? "unreviewed" : episode.review === 1 ? "manual ✓" : "manual ✗",
      ].join(" · ");
      const row = el(
        "button",
        { class: `episode${episode.id === state.selected ? " active" : ""}` },
        [`${episode.id} → ${episode.target_name} (${flags})`]
      );
      row.addEventListener("click", () => {
        state.selected = episode.id;
        redraw();
      });
      listBox.append(row);
    }
  };

  const drawDetail = () => {
    clear(detailBox);
    const episode = state.episodes.find((e) => e.id === state.selected);
    if (!episode) return;
    detailBox.append(
      el("h2", {}, [`${episode.id}: go to ${episode.target_name}`]),
      el("p", {}, [
        `start ${fmt(episode.start)} → stop ${fmt(episode.stop)}` +
          (episode.goal ? `, goal ${fmt(episode.goal)}` : "") +
          `, cost ${episode.cost.toFixed(2)}` +
          (episode.reason ? `, ${episode.reason}` : ""),
      ])
    );
    const images = el("div", { class: "views" });
    images.append(
      el("figure", {}, [
        el("img", { src: episode.map_render, alt: "top-down map" }),
        el("figcaption", {}, ["top-down map (white start, yellow goal, red stop)"]),
      ])
    );
    if (episode.final_view) {
      images.append(
        el("figure", {}, [
          el("img", { src: episode.final_view, alt: "final view" }),
          el("figcaption", {}, ["final egocentric view"]),
        ])
      );
    }
    detailBox.append(images);

    const verdicts = el("div", { class: "verdicts" });
    const note = el("div", { class: "status" });
    for (const [label, value] of [["mark success", 1], ["mark failure", 0]] as const) {
      const button = el("button", { class: value ? "good" : "bad" }, [label]);
      button.addEventListener("click", async () => {
        clear(note);
        const before = state.episodes;
        state.episodes = withVerdict(state.episodes, episode.id, value as Verdict);
        redraw();
        try {
          const result = await api.postReview(episode.id, value as Verdict);
          state.summary = result.summary; // reconcile with the server
          redraw();
        } catch (err) {
          state.episodes = before; // roll back the optimistic update
          redraw();
          note.append(banner("error", describe(err)));
        }
      });
      verdicts.append(button);
    }
    detailBox.append(verdicts, note);
  };

  void load();
}

function fmt(cell: [number, number]): string {
  return `(${cell[0]}, ${cell[1]})`;
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? `server offline: ${err.message}` : err.message;
  }
  return err instanceof Error ? err.message : String(err);
}
